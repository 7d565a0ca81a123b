"""Run DG / ESDG protocols and assemble metrics reports."""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..training import Dataset, TrainConfig, load_dataset, predict_proba, train
from .manifest import domains_of
from .metrics import accuracy, auc_ovr_macro, macro_f1, per_class_f1
from .splits import make_splits

METRICS = ("auc", "acc", "f1")


@dataclass
class RunResult:
    label: str
    train_domains: list
    test_domains: list
    n_train: int
    n_test: int
    auc: float
    acc: float
    f1: float
    per_class_auc: dict = field(default_factory=dict)
    per_class_f1: dict = field(default_factory=dict)
    dropped_classes: list = field(default_factory=list)
    seconds: float = 0.0


@dataclass
class MetricsReport:
    protocol: str
    method: str
    seed: int
    config_hash: str
    config: dict
    runs: list
    average: dict

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        d["runs"] = [RunResult(**r) for r in d["runs"]]
        return cls(**d)


def evaluate(net, ds: Dataset, n_classes: int) -> dict:
    """AUC / ACC / F1 (percent) of ``net`` on ``ds``; absent classes are dropped."""
    proba = predict_proba(net, ds.images)
    preds = proba.argmax(axis=1)
    y = ds.labels
    auc, per_auc = auc_ovr_macro(proba, y, return_per_class=True)
    present = set(int(c) for c in np.unique(y))
    return {
        "auc": 100.0 * auc,
        "acc": 100.0 * accuracy(preds, y),
        "f1": 100.0 * macro_f1(preds, y),
        "per_class_auc": {str(k): 100.0 * v for k, v in per_auc.items()},
        "per_class_f1": {str(k): 100.0 * v for k, v in per_class_f1(preds, y).items()},
        "dropped_classes": [c for c in range(n_classes) if c not in present],
    }


def average_row(runs) -> dict:
    return {m: float(np.mean([getattr(r, m) for r in runs])) for m in METRICS}


def _train_and_score(config: TrainConfig, run, train_ds: Dataset, test_ds: Dataset) -> RunResult:
    start = time.perf_counter()
    net, _ = train(config, train_ds)
    m = evaluate(net, test_ds, config.n_classes)
    return RunResult(run.label, list(run.train_domains), list(run.test_domains),
                     len(train_ds), len(test_ds), m["auc"], m["acc"], m["f1"],
                     m["per_class_auc"], m["per_class_f1"], m["dropped_classes"],
                     time.perf_counter() - start)


def run_protocol(dataset: Dataset, protocol: str, config: TrainConfig, domains=None,
                 progress=None, workers: int = 1) -> MetricsReport:
    """Train and evaluate once per run of the split plan.

    ``dataset`` holds every manifest image; ``domains`` fixes the run order
    (default: first-appearance order in the dataset). With ``workers > 1``
    runs execute in separate processes; each run is seeded on its own, so the
    report does not depend on the worker count (only ``seconds`` does).
    """
    if domains is None:
        domains = list(dict.fromkeys(dataset.domains))
    plan = make_splits(domains, protocol)
    jobs = [(config, run, dataset.subset(run.train_domains), dataset.subset(run.test_domains))
            for run in plan.runs]
    runs = []
    if workers <= 1:
        for job in jobs:
            runs.append(_train_and_score(*job))
            if progress is not None:
                progress(runs[-1])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_train_and_score, *job) for job in jobs]
            for fut in futures:
                runs.append(fut.result())
                if progress is not None:
                    progress(runs[-1])
    return MetricsReport(plan.protocol, config.method, config.seed, config.digest(),
                         config.to_dict(), runs, average_row(runs))


def run_protocol_from_manifest(records, root, protocol: str, config: TrainConfig, progress=None,
                               workers: int = 1):
    ds = load_dataset(records, root, config.input_size)
    return run_protocol(ds, protocol, config, domains_of(records), progress, workers)


def format_table(reports, digits: int = 1) -> str:
    """Aligned text in the layout of a comparison table: one column group per
    run label (target for DG, source for ESDG), one row per report."""
    if not reports:
        return ""
    labels = [r.label for r in reports[0].runs] + ["Average"]
    head = {"DG": "Target", "ESDG": "Source"}.get(reports[0].protocol, "Run")
    name_w = max(len(head), len("Metrics"), *(len(r.method) for r in reports))
    cell = max(6, digits + 4)
    group_w = 3 * cell + 2
    lines = []
    row = head.ljust(name_w) + " | " + " | ".join(lab[:group_w].center(group_w) for lab in labels)
    lines.append(row)
    sub = " ".join(m.upper().rjust(cell) for m in METRICS)
    lines.append("Metrics".ljust(name_w) + " | " + " | ".join(sub for _ in labels))
    lines.append("-" * len(row))
    for rep in reports:
        groups = []
        for r in rep.runs:
            groups.append(" ".join(f"{getattr(r, m):{cell}.{digits}f}" for m in METRICS))
        groups.append(" ".join(f"{rep.average[m]:{cell}.{digits}f}" for m in METRICS))
        lines.append(rep.method.ljust(name_w) + " | " + " | ".join(groups))
    return "\n".join(lines)
