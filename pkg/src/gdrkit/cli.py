"""Command-line entry point: ``gdrkit <command> [options]``."""

from __future__ import annotations

import os

# Numerical kernels run single-threaded so results never depend on the BLAS
# thread pool; ``--threads`` parallelises independent protocol runs instead.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse  # noqa: E402
import difflib  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
import warnings  # noqa: E402
from pathlib import Path  # noqa: E402

from . import config as cfgmod  # noqa: E402
from .rng import SEED_ENV, resolve_seed  # noqa: E402

PROG = "gdrkit"
COMMANDS = ("augment", "dcr-weights", "synth", "stats", "train", "eval", "bench", "grad-check")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")

log = logging.getLogger(PROG)


class CliError(Exception):
    """Invalid flag combination or input detected by the CLI itself."""


# --------------------------------------------------------------------------
# shared configuration handling


def _effective(args, known) -> dict:
    """Config file merged with ``--set`` overrides, keys checked against ``known``."""
    merged = cfgmod.read_config_file(getattr(args, "config", None))
    merged.update(cfgmod.parse_overrides(getattr(args, "set", None)))
    cfgmod.check_keys(merged, known)
    return merged


def _seed(args, merged: dict) -> int:
    if args.seed is not None:
        return int(args.seed)
    if "seed" in merged:
        return int(merged["seed"])
    return resolve_seed(None)


def _train_config(args, method=None):
    from .training import DESK_PRESET

    merged = _effective(args, cfgmod.TRAIN_KEYS + cfgmod.AUG_KEYS)
    base = dict(DESK_PRESET) if args.preset == "desk" else {}
    base.update(merged)
    base["seed"] = _seed(args, merged)
    if method is not None:
        base["method"] = method
    return cfgmod.train_config_from(base)


def _write_text(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text if text.endswith("\n") else text + "\n")


def _banner(title: str) -> str:
    return f"----- {title} -----"


def _load_manifest(path):
    from .benchmark.manifest import parse_manifest

    records = parse_manifest(path)
    return records, os.path.dirname(os.path.abspath(path))


# --------------------------------------------------------------------------
# commands


def cmd_augment(args) -> int:
    from .fundusaug import AugPlan, apply_plan, fundus_aug
    from .imagecore import load_image, save_image
    from .rng import make_rng

    merged = _effective(args, cfgmod.AUG_KEYS + ("seed",))
    seed = _seed(args, merged)
    aug_cfg = cfgmod.aug_config_from({k: v for k, v in merged.items() if k != "seed"})
    src, dst = Path(args.in_dir), Path(args.out_dir)
    if not src.is_dir():
        raise CliError(f"input directory not found: {src}")
    if args.replay:
        with open(args.replay, encoding="utf-8") as fh:
            rows = [json.loads(line) for line in fh if line.strip()]
        plans = {r["path"]: AugPlan.from_json(json.dumps(r["plan"])) for r in rows if r.get("kind") == "plan"}
    files = sorted(p for p in src.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise CliError(f"no images under {src}")
    header = {"kind": "header", "command": "augment", "seed": seed, "config": aug_cfg.to_mapping()}
    lines = [json.dumps(header, sort_keys=True)]
    for path in files:
        rel = path.relative_to(src).as_posix()
        img = load_image(path)
        if args.replay:
            if rel not in plans:
                raise CliError(f"{rel}: no plan in {args.replay}")
            plan = plans[rel]
            out = apply_plan(img, plan)
        else:
            # stream keyed by relative path, so adding files never shifts others
            out, plan = fundus_aug(img, aug_cfg, make_rng(seed, "augment", rel))
        (dst / rel).parent.mkdir(parents=True, exist_ok=True)
        save_image(out, dst / rel)
        lines.append(json.dumps({"kind": "plan", "path": rel,
                                 "plan": json.loads(plan.to_json())}, sort_keys=True))
    _write_text(args.plan_out or dst / "plans.jsonl", "\n".join(lines))
    print(f"augmented {len(files)} images into {dst}")
    return 0


def _format_grid(name: str, table, values, digits: int) -> str:
    n_classes = values.shape[1]
    width = max(len(d) for d in table.domains + (name,))
    cell = digits + 6
    lines = [name.ljust(width) + "".join(f"c{k}".rjust(cell) for k in range(n_classes))]
    for d, row in zip(table.domains, values):
        lines.append(d.ljust(width) + "".join(f"{v:.{digits}f}".rjust(cell) for v in row))
    return "\n".join(lines)


def cmd_dcr_weights(args) -> int:
    from .dcr import DomainClassCounts, build_table

    records, _ = _load_manifest(args.manifest)
    from .benchmark.manifest import domains_of

    counts = DomainClassCounts.from_labels([r.domain for r in records], [r.grade for r in records],
                                           args.n_classes, domains_of(records))
    table = build_table(counts, args.beta, conditional=args.conditional)
    print(_format_grid("q", table, table.q, 4))
    print()
    print(_format_grid("w", table, table.w, 4))
    print(_banner("json"))
    payload = {"config": {"beta": args.beta, "conditional": args.conditional,
                          "manifest": os.path.abspath(args.manifest), "n_classes": args.n_classes},
               "counts": counts.counts.tolist(), **table.as_dict()}
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_synth(args) -> int:
    from .benchmark.synth import default_specs, specs_from_json, synth_generate

    seed = args.seed if args.seed is not None else resolve_seed(None)
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            specs = specs_from_json(fh.read())
    else:
        specs = default_specs(args.images_per_domain, args.size)
    result = synth_generate(specs, seed, args.out)
    print(f"wrote {len(result.records)} images in {len(specs)} domains; manifest {result.manifest_path}")
    return 0


def cmd_stats(args) -> int:
    from .benchmark.stats import domain_stats, format_stats, stats_to_json

    records, root = _load_manifest(args.manifest)
    stats = domain_stats(records, root, args.n_classes)
    text = format_stats(stats)
    js = json.dumps({"config": {"manifest": os.path.abspath(args.manifest), "n_classes": args.n_classes},
                     "domains": json.loads(stats_to_json(stats))}, indent=2, sort_keys=True)
    print(text)
    print(_banner("json"))
    print(js)
    if args.out:
        from .plotting import plot_stats

        out = Path(args.out)
        _write_text(out / "stats.txt", text)
        _write_text(out / "stats.json", js)
        plot_stats(stats, out / "stats.png")
        print(f"figures: {out / 'stats.png'}", file=sys.stderr)
    return 0


def _select(records, domains):
    if not domains:
        return records
    wanted = [d.strip() for d in domains.split(",") if d.strip()]
    known = {r.domain for r in records}
    for d in wanted:
        if d not in known:
            raise CliError(f"domain {d!r} not in manifest{cfgmod._suggest(d, known)}")
    return [r for r in records if r.domain in wanted]


def cmd_train(args) -> int:
    from .model import save_model
    from .plotting import plot_history
    from .training import load_dataset, train

    config = _train_config(args, args.method)
    records, root = _load_manifest(args.manifest)
    records = _select(records, args.domains)
    ds = load_dataset(records, root, config.input_size)

    def progress(row):
        log.info("epoch %(epoch)d loss %(loss).4f alpha %(alpha).3f lr %(lr).5f", row)

    net, history = train(config, ds, progress)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    extra = {"train_config": config.to_dict(), "seed": config.seed,
             "domains": sorted(set(ds.domains)), "history": history.epochs}
    save_model(out, net, extra)
    stem = out.with_suffix("")
    _write_text(f"{stem}.history.json", json.dumps({"config": config.to_dict(), **history.to_dict()},
                                                    indent=2, sort_keys=True))
    plot_history(history, f"{stem}.history.png")
    print(f"saved model to {out} (config {config.digest()})")
    return 0


def cmd_eval(args) -> int:
    from .benchmark.protocol import MetricsReport, RunResult, average_row, evaluate, format_table
    from .model import load_model
    from .training import load_dataset

    net, extra = load_model(args.model)
    records, root = _load_manifest(args.manifest)
    records = _select(records, args.domains)
    config = extra.get("train_config", {})
    ds = load_dataset(records, root, net.config.input_size)
    m = evaluate(net, ds, net.config.n_classes)
    run = RunResult("eval", extra.get("domains", []), sorted(set(ds.domains)), 0, len(ds),
                    m["auc"], m["acc"], m["f1"], m["per_class_auc"], m["per_class_f1"], m["dropped_classes"])
    report = MetricsReport("EVAL", config.get("method", "?"), int(extra.get("seed", 0)),
                           "", {**config, "model": os.path.abspath(args.model)}, [run], average_row([run]))
    print(format_table([report]))
    print(_banner("json"))
    print(report.to_json())
    if args.out:
        _write_text(args.out, report.to_json())
    return 0


def cmd_bench(args) -> int:
    from .benchmark.manifest import domains_of
    from .benchmark.protocol import format_table, run_protocol
    from .benchmark.splits import make_splits
    from .plotting import plot_reports
    from .training import load_dataset, normalize_method

    records, root = _load_manifest(args.manifest)
    domains = domains_of(records)
    make_splits(domains, args.protocol)  # fail fast before loading images
    methods = [normalize_method(m.strip()) for m in args.method.split(",") if m.strip()]
    configs = [_train_config(args, m) for m in methods]
    ds = load_dataset(records, root, configs[0].input_size)
    out = Path(args.out)
    reports = []
    for config in configs:
        def progress(r, method=config.method):
            log.info("%s %s: AUC %.1f ACC %.1f F1 %.1f (%.0fs)", method, r.label, r.auc, r.acc, r.f1, r.seconds)

        rep = run_protocol(ds, args.protocol, config, domains, progress, workers=args.threads)
        reports.append(rep)
        _write_text(out / f"report_{rep.protocol.lower()}_{rep.method}_seed{rep.seed}.json", rep.to_json())
    table = format_table(reports)
    provenance = "\n".join(f"# {r.method}: protocol={r.protocol} seed={r.seed} config={r.config_hash}"
                           for r in reports)
    _write_text(out / "table.txt", provenance + "\n" + table)
    _write_text(out / "config.yaml", cfgmod.dump_flat({"methods": methods, **{
        k: v for k, v in reports[0].config.items() if k != "method"}}))
    fig = plot_reports(reports, out / f"{reports[0].protocol.lower()}_auc.png")
    print(table)
    print(_banner("json"))
    print(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True))
    print(f"figures: {fig}", file=sys.stderr)
    return 0


def cmd_grad_check(args) -> int:
    from .gradcheck import run_suite

    res = run_suite(args.instances, args.seed if args.seed is not None else resolve_seed(None))
    limits = {"cross_entropy": 1e-5, "ntxent": 1e-5, "network": 1e-4}
    ok = True
    for name, limit in limits.items():
        passed = res[name] < limit
        ok &= passed
        print(f"{name:14s} max rel err {res[name]:.3e}  (limit {limit:.0e})  {'ok' if passed else 'FAIL'}")
    print(f"{args.instances} instances per suite in {res['seconds']:.1f}s")
    return 0 if ok else 1


# --------------------------------------------------------------------------
# parser


def _common(p, config=True, preset=False):
    p.add_argument("--seed", type=int, default=None,
                   help=f"global seed (falls back to the config file, then ${SEED_ENV}, then 0)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker processes for independent runs; results do not depend on it")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more log output (repeatable)")
    if config:
        p.add_argument("--config", metavar="FILE", help="flat YAML config file (key: value)")
        p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                       help="override one config key (repeatable)")
    if preset:
        p.add_argument("--preset", choices=("desk", "appendix"), default="desk",
                       help="base hyperparameters: 'desk' raises the learning rate for the small "
                            "from-scratch network; 'appendix' keeps the library defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROG, description="Fundus DR domain-generalization toolkit.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("augment", help="augment a directory of images and record the plans")
    p.add_argument("--in", dest="in_dir", required=True, metavar="DIR", help="input image directory")
    p.add_argument("--out", dest="out_dir", required=True, metavar="DIR", help="output directory")
    p.add_argument("--plan-out", metavar="FILE", help="JSONL plan file (default OUT/plans.jsonl)")
    p.add_argument("--replay", metavar="FILE", help="apply plans from an earlier --plan-out instead of sampling")
    _common(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("dcr-weights", help="print occurrence and re-balancing weight tables")
    p.add_argument("--manifest", required=True, metavar="FILE")
    p.add_argument("--beta", type=float, default=0.5, help="re-balancing intensity in [0, 1]")
    p.add_argument("--conditional", action="store_true", help="per-domain q = n/n_domain instead of joint")
    p.add_argument("--n-classes", type=int, default=5)
    _common(p, config=False)
    p.set_defaults(func=cmd_dcr_weights)

    p = sub.add_parser("synth", help="generate a synthetic multi-domain fundus benchmark")
    p.add_argument("--spec", metavar="FILE", help="JSON domain specs (default: built-in 4 domains)")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--images-per-domain", type=int, default=200)
    p.add_argument("--size", type=int, default=64)
    _common(p, config=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="per-domain colour statistics and grade histograms")
    p.add_argument("--manifest", required=True, metavar="FILE")
    p.add_argument("--out", metavar="DIR", help="also write stats.txt, stats.json and stats.png here")
    p.add_argument("--n-classes", type=int, default=5)
    _common(p, config=False)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--manifest", required=True, metavar="FILE")
    p.add_argument("--method", default=None, help="erm, gdrnet or ablation A..G (overrides config)")
    p.add_argument("--domains", help="comma-separated training domains (default: all)")
    p.add_argument("--out", required=True, metavar="MODEL", help="model file (.npz)")
    _common(p, preset=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on a manifest")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--manifest", required=True, metavar="FILE")
    p.add_argument("--domains", help="comma-separated evaluation domains (default: all)")
    p.add_argument("--out", metavar="FILE", help="write the JSON report here")
    _common(p, config=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="run a DG or ESDG protocol")
    p.add_argument("--protocol", required=True, type=str.lower, choices=("dg", "esdg"))
    p.add_argument("--manifest", required=True, metavar="FILE")
    p.add_argument("--method", default="erm,gdrnet", help="comma-separated methods (default erm,gdrnet)")
    p.add_argument("--out", required=True, metavar="DIR")
    _common(p, preset=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("grad-check", help="finite-difference gradient suites")
    p.add_argument("--instances", type=int, default=20)
    _common(p, config=False)
    p.set_defaults(func=cmd_grad_check)
    return parser


def _unknown_command(argv) -> str | None:
    first = next((a for a in argv if not a.startswith("-")), None)
    if first is None or first in COMMANDS:
        return None
    close = difflib.get_close_matches(first, COMMANDS, n=1)
    hint = f"; did you mean {close[0]!r}?" if close else f"; commands: {', '.join(COMMANDS)}"
    return f"{PROG}: unknown command {first!r}{hint}"


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    msg = _unknown_command(argv)
    if msg:
        print(msg, file=sys.stderr)
        return 2
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 2
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.threads < 1:
        print(f"{PROG}: error: --threads must be >= 1", file=sys.stderr)
        return 2
    from .benchmark.manifest import ManifestError
    from .imagecore import ImageError

    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore", UserWarning)
            return args.func(args)
    except (CliError, cfgmod.ConfigError, ManifestError, ImageError, ValueError, KeyError,
            OSError) as exc:
        text = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"{PROG} {args.command}: error: {text}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
