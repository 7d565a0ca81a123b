"""Acceptance suite: one test per criterion, each recording a pass/fail line.

The lines are printed in the terminal summary (see conftest). Criteria 8 and 9
train on the default synthetic benchmark and take roughly half an hour on one
CPU core together; their trainings are shared through a session cache.
"""

import itertools
import math
import time

import numpy as np
import pytest

from gdrkit import cli, losses
from gdrkit.benchmark.manifest import domains_of, parse_manifest
from gdrkit.benchmark.metrics import accuracy, auc_ovr_macro, macro_f1
from gdrkit.benchmark.protocol import run_protocol
from gdrkit.benchmark.splits import make_splits
from gdrkit.benchmark.synth import default_specs, synth_generate
from gdrkit.dcr import DomainClassCounts, build_table, dcr_weights
from gdrkit.fundusaug import AugConfig, AugPlan, apply_plan, fundus_aug
from gdrkit.gradcheck import run_suite
from gdrkit.rng import make_rng
from gdrkit.training import DESK_PRESET, TrainConfig, load_dataset, train

from conftest import random_image, record_criterion

SEEDS = (0, 1, 2)


# --- 1: gradients ----------------------------------------------------------------


def test_criterion_01_gradient_suite():
    res = run_suite(instances=20)
    ok = res["cross_entropy"] < 1e-5 and res["ntxent"] < 1e-5 and res["network"] < 1e-4 and res["seconds"] < 120
    record_criterion(1, ok, "max rel err CE {cross_entropy:.1e}, NT-Xent {ntxent:.1e}, "
                     "network {network:.1e}; {seconds:.1f}s".format(**res))
    assert ok


# --- 2, 3: loss closed forms -------------------------------------------------------


def test_criterion_02_ntxent_closed_forms():
    rng = make_rng(2, "acc")
    single = rng.normal(size=(1, 8))
    single /= np.linalg.norm(single)
    loss_one = losses.ntxent(single, single.copy(), tau=0.1)[0]
    row = rng.normal(size=(1, 8))
    row /= np.linalg.norm(row)
    pair = np.repeat(row, 2, axis=0)
    loss_two = losses.ntxent(pair, pair.copy(), tau=0.1)[0]
    ok = loss_one == 0.0 and abs(loss_two - math.log(3)) <= 1e-12
    record_criterion(2, ok, f"N=1 loss {loss_one!r}; N=2 |loss - ln 3| {abs(loss_two - math.log(3)):.1e}")
    assert ok


def test_criterion_03_ce_uniform_logits():
    loss = losses.cross_entropy(np.zeros((4, 5)), np.array([0, 1, 2, 4]))[0]
    err = abs(loss - math.log(5))
    record_criterion(3, err <= 1e-12, f"|loss - ln 5| {err:.1e}")
    assert err <= 1e-12


# --- 4: DCR -----------------------------------------------------------------------


def direct_weights(table, beta):
    """Plain loops: sum of q^beta over observed pairs, divided by each q^beta."""
    total = float(sum(sum(r) for r in table))
    num = sum((n / total) ** beta for r in table for n in r if n > 0)
    return [[num / (n / total) ** beta if n > 0 else 0.0 for n in r] for r in table]


def test_criterion_04_dcr():
    rng = make_rng(4, "acc")
    worst = 0.0
    for _ in range(100):
        d, c = rng.integers(1, 7), rng.integers(2, 6)
        table = rng.integers(0, 60, size=(d, c))
        table[0, 0] += 1
        beta = float(rng.uniform(0, 1))
        got = build_table(DomainClassCounts([f"d{k}" for k in range(d)], c, table), beta).w
        worst = max(worst, float(np.abs(got - np.array(direct_weights(table.tolist(), beta))).max()))
    q = np.array([[0.1, 0.2], [0.3, 0.4]])
    flat = dcr_weights(q, 0.0).w
    two = dcr_weights(np.array([[0.75, 0.25]]), 1.0).w[0]
    disp = [float(dcr_weights(q, b).w.max() / dcr_weights(q, b).w.min()) for b in np.linspace(0, 1, 21)]
    checks = {
        "oracle": worst <= 1e-12,
        "beta0": np.all(flat == flat[0, 0]),
        "pair": abs(two[0] - 4 / 3) <= 1e-12 and abs(two[1] - 4.0) <= 1e-12,
        "dispersion": all(b >= a for a, b in zip(disp, disp[1:])),
    }
    ok = all(checks.values())
    record_criterion(4, ok, f"oracle max err {worst:.1e}; " + ", ".join(f"{k}={'ok' if v else 'FAIL'}"
                                                                        for k, v in checks.items()))
    assert ok


# --- 5: augmentation ------------------------------------------------------------------


def test_criterion_05_augmentation(tmp_path):
    synth_generate(default_specs(images_per_domain=5, size=48), 5, tmp_path / "src")
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        assert cli.main(["augment", "--in", str(tmp_path / "src"), "--out", str(out), "--seed", "5"]) == 0
    files_a = sorted(p.relative_to(out_a) for p in out_a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(out_b) for p in out_b.rglob("*") if p.is_file())
    identical = files_a == files_b and len(files_a) > 1 and all(
        (out_a / f).read_bytes() == (out_b / f).read_bytes() for f in files_a)

    identity_err, lo, hi, replay_ok = 0.0, 1.0, 0.0, True
    cfg = AugConfig.default(probability=0.5)
    for k in range(30):
        img = random_image(500 + k, 32, 32, masked=True)
        same, _ = fundus_aug(img, AugConfig.identity(), make_rng(k, "id"))
        identity_err = max(identity_err, float(np.abs(same.data - img.data).max()))
        out, plan = fundus_aug(img, cfg, make_rng(k, "aug"))
        lo, hi = min(lo, float(out.data.min())), max(hi, float(out.data.max()))
        replay = apply_plan(img, AugPlan.from_json(plan.to_json()))
        replay_ok &= np.array_equal(replay.data, out.data)
    ok = identical and identity_err <= 1e-4 and lo >= 0.0 and hi <= 1.0 and replay_ok
    record_criterion(5, ok, f"corpus identical={identical} ({len(files_a)} files); identity err {identity_err:.1e}; "
                     f"range [{lo:.3f}, {hi:.3f}]; replay exact={replay_ok}")
    assert ok


# --- 6: metrics -------------------------------------------------------------------------


def pairwise_auc(scores, labels):
    """Average over classes of the fraction of (positive, negative) pairs ordered correctly."""
    out = []
    for c in np.unique(labels):
        pos, neg = scores[labels == c, c], scores[labels != c, c]
        hits = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
        out.append(hits / (len(pos) * len(neg)))
    return float(np.mean(out))


def test_criterion_06_metric_oracle():
    rng = make_rng(6, "acc")
    worst = 0.0
    for _ in range(50):
        n, c = int(rng.integers(6, 40)), int(rng.integers(2, 6))
        labels = rng.integers(0, c, size=n)
        labels[:2] = [0, 1]
        # coarse scores force ties
        raw = np.round(rng.uniform(size=(n, c)), 1) + 1e-3
        scores = raw / raw.sum(axis=1, keepdims=True)
        worst = max(worst, abs(auc_ovr_macro(scores, labels) - pairwise_auc(scores, labels)))
    labels = np.array([0, 1, 2, 3, 4, 0, 2])
    perfect = np.eye(5)[labels]
    scores = 100 * np.array([accuracy(labels, labels), macro_f1(labels, labels), auc_ovr_macro(perfect, labels)])
    ok = worst <= 1e-9 and np.all(scores == 100.0)
    record_criterion(6, ok, f"max |rank - pairwise| {worst:.1e}; perfect ACC/F1/AUC {scores.tolist()}")
    assert ok


# --- 7: protocols ----------------------------------------------------------------------


def test_criterion_07_protocol_structure():
    six = [f"D{k}" for k in range(6)]
    dg = make_splits(six, "dg").runs
    dg_ok = (len(dg) == 6
             and all(not set(r.train_domains) & set(r.test_domains) for r in dg)
             and all(set(r.train_domains) | set(r.test_domains) == set(six) for r in dg)
             and [r.test_domains for r in dg] == [(d,) for d in six])
    esdg = [(r.train_domains, r.test_domains) for r in make_splits(["a", "b", "c"], "esdg").runs]
    esdg_ok = esdg == [(("a",), ("b", "c")), (("b",), ("a", "c")), (("c",), ("a", "b"))]
    record_criterion(7, dg_ok and esdg_ok, f"DG 6 runs disjoint/covering={dg_ok}; ESDG enumeration={esdg_ok}")
    assert dg_ok and esdg_ok


# --- 8, 9: desk-scale experiments ---------------------------------------------------------


@pytest.fixture(scope="session")
def desk_bench(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    synth_generate(default_specs(images_per_domain=200, size=64), 0, root)
    records = parse_manifest(root / "manifest.csv")
    dataset = load_dataset(records, str(root), 64)
    cache = {}

    def result(method, seed):
        """(average AUC, seconds) for one DG sweep, computed once per session."""
        if (method, seed) not in cache:
            start = time.perf_counter()
            config = TrainConfig(method=method, seed=seed, **DESK_PRESET)
            report = run_protocol(dataset, "DG", config, domains_of(records))
            cache[method, seed] = (report.average["auc"], time.perf_counter() - start)
        return cache[method, seed]

    return result


def mean_auc(bench, method):
    return float(np.mean([bench(method, s)[0] for s in SEEDS]))


@pytest.mark.slow
def test_criterion_08_desk_directional(desk_bench):
    erm, gdr = mean_auc(desk_bench, "erm"), mean_auc(desk_bench, "gdrnet")
    seconds = sum(desk_bench(m, s)[1] for m, s in itertools.product(("erm", "gdrnet"), SEEDS))
    ok = gdr - erm >= 2.0 and seconds < 30 * 60
    per_seed = ", ".join(f"s{s} {desk_bench('erm', s)[0]:.1f}/{desk_bench('gdrnet', s)[0]:.1f}" for s in SEEDS)
    record_criterion(8, ok, f"AUC erm {erm:.2f} vs gdrnet {gdr:.2f} (gap {gdr - erm:+.2f}, need >= +2.00); "
                     f"{per_seed}; {seconds / 60:.1f} min")
    assert ok


@pytest.mark.slow
def test_criterion_09_ablation(desk_bench):
    erm = mean_auc(desk_bench, "erm")
    single = {m: mean_auc(desk_bench, m) for m in "ABCD"}
    gdr = mean_auc(desk_bench, "gdrnet")
    best = max(single.values())
    singles_ok = all(v >= erm - 0.5 for v in single.values())
    full_ok = gdr >= best - 0.5
    record_criterion(9, singles_ok and full_ok,
                     f"ERM {erm:.2f}; " + ", ".join(f"{m} {v:.2f}" for m, v in single.items())
                     + f"; gdrnet {gdr:.2f} vs best single {best:.2f}")
    assert singles_ok and full_ok


# --- 10: reduction identity -----------------------------------------------------------------


def test_criterion_10_reduction_identity(tmp_path):
    synth_generate(default_specs(images_per_domain=24, size=32), 10, tmp_path)
    records = parse_manifest(tmp_path / "manifest.csv")
    ds = load_dataset(records, str(tmp_path), 32)
    common = dict(seed=3, epochs=4, batch_size=16, input_size=32, **DESK_PRESET)
    net_e, hist_e = train(TrainConfig(method="erm", **common), ds)
    net_g, hist_g = train(TrainConfig(method="gdrnet", use_dcr=False, alpha_mode="constant", alpha_value=0.0,
                                      aug_probability=0.0, **common), ds)
    same_losses = hist_e.step_losses == hist_g.step_losses
    same_params = all(np.array_equal(net_e.params[k], net_g.params[k]) for k in net_e.params)
    record_criterion(10, same_losses and same_params,
                     f"{len(hist_e.step_losses)} steps; losses identical={same_losses}; final params identical={same_params}")
    assert same_losses and same_params
