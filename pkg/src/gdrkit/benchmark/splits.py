"""Leave-one-domain-out (DG) and train-on-one-domain (ESDG) split plans."""

from __future__ import annotations

from dataclasses import dataclass

PROTOCOLS = ("DG", "ESDG")


@dataclass(frozen=True)
class Run:
    train_domains: tuple
    test_domains: tuple
    # DG runs are named by their target, ESDG runs by their source
    label: str = ""


@dataclass(frozen=True)
class SplitPlan:
    protocol: str
    runs: tuple


def normalize_protocol(protocol: str) -> str:
    p = protocol.upper()
    if p not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}; expected one of {', '.join(PROTOCOLS)}")
    return p


def make_splits(domains, protocol: str) -> SplitPlan:
    protocol = normalize_protocol(protocol)
    domains = list(dict.fromkeys(domains))
    if len(domains) < 2:
        raise ValueError(f"{protocol} needs at least 2 domains, got {len(domains)}")
    runs = []
    for k, d in enumerate(domains):
        others = tuple(domains[:k] + domains[k + 1:])
        if protocol == "DG":
            runs.append(Run(others, (d,), d))
        else:
            runs.append(Run((d,), others, d))
    return SplitPlan(protocol, tuple(runs))
