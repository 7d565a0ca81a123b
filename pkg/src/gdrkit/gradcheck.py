"""Central finite-difference checks for the loss and network gradients."""

from __future__ import annotations

import time

import numpy as np

from . import losses
from .model import NetConfig, TinyNet, backward, forward
from .rng import make_rng

EPS = 1e-5
ZERO_FLOOR = 1e-12


def numerical_grad(f, x: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (mutated in place)."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        fp = f()
        flat[k] = orig - eps
        fm = f()
        flat[k] = orig
        gflat[k] = (fp - fm) / (2.0 * eps)
    return g


def relative_error(analytic, numeric) -> float:
    """``max |a - n|`` scaled by the largest gradient magnitude of the tensor.

    Entry-wise ratios are dominated by round-off (about 1e-11 here) on
    near-zero entries, so the error is measured against the tensor's scale.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(a).max(), np.abs(n).max())
    # a tensor whose true gradient is zero (dead relu path) carries only
    # round-off; nothing meaningful to compare
    if scale < ZERO_FLOOR:
        return 0.0
    return float(np.abs(a - n).max() / scale)


def _unit_rows(rng, n, d):
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def check_cross_entropy(seed: int) -> float:
    rng = make_rng(seed, "ce")
    n, c = int(rng.integers(2, 9)), int(rng.integers(2, 7))
    z = rng.normal(0.0, 2.0, (n, c))
    y = rng.integers(0, c, n)
    w = rng.uniform(0.1, 3.0, n)
    _, grad = losses.cross_entropy(z, y, w)
    num = numerical_grad(lambda: losses.cross_entropy(z, y, w)[0], z)
    return relative_error(grad, num)


def check_ntxent(seed: int, n: int = 8, d: int = 16, tau: float = 0.1, symmetric: bool = False) -> float:
    rng = make_rng(seed, "ntxent")
    fs, fw = _unit_rows(rng, n, d), _unit_rows(rng, n, d)
    _, gs, gw = losses.ntxent(fs, fw, tau, symmetric=symmetric)
    ns = numerical_grad(lambda: losses.ntxent(fs, fw, tau, symmetric=symmetric)[0], fs)
    nw = numerical_grad(lambda: losses.ntxent(fs, fw, tau, symmetric=symmetric)[0], fw)
    return max(relative_error(gs, ns), relative_error(gw, nw))


def tiny_net(seed: int, activation: str = "tanh", trunk: str = "conv") -> TinyNet:
    cfg = NetConfig(input_size=6, pool=1, hidden=(6, 5), proj_hidden=5, proj_dim=4,
                    n_classes=3, activation=activation, trunk=trunk, conv_channels=(3, 4))
    net = TinyNet(cfg, rng=make_rng(seed, "init"))
    # non-trivial biases and head so every path carries signal
    rng = make_rng(seed, "perturb")
    for name, p in net.params.items():
        p += rng.normal(0.0, 0.3, p.shape)
    return net


def network_loss(net: TinyNet, strong, weak, labels, weights, alpha: float, tau: float):
    """Hybrid loss of a two-view batch and its parameter gradients."""
    logits, emb, cache = forward(net, strong)
    _, emb_w, cache_w = forward(net, weak)
    sup = losses.cross_entropy(logits, labels, weights)
    scon = losses.ntxent(emb, emb_w, tau)
    total, (gz,), (ges, gew) = losses.dahloss_combine(sup, scon, alpha)
    g1 = backward(net, cache, gz, ges)
    g2 = backward(net, cache_w, np.zeros_like(gz), gew)
    return total, {k: g1[k] + g2[k] for k in g1}


def check_network(seed: int, alpha: float = None, activation: str = "tanh", trunk: str = "conv") -> float:
    rng = make_rng(seed, "batch")
    net = tiny_net(seed, activation, trunk)
    b = 4
    strong = rng.uniform(0.0, 1.0, (b, 6, 6, 3))
    weak = rng.uniform(0.0, 1.0, (b, 6, 6, 3))
    labels = rng.integers(0, net.config.n_classes, b)
    weights = rng.uniform(0.5, 2.0, b)
    if alpha is None:
        alpha = float(rng.uniform())
    _, grads = network_loss(net, strong, weak, labels, weights, alpha, 0.5)
    worst = 0.0
    for name, param in net.params.items():
        num = numerical_grad(
            lambda: network_loss(net, strong, weak, labels, weights, alpha, 0.5)[0], param
        )
        worst = max(worst, relative_error(grads[name], num))
    return worst


def run_suite(instances: int = 20, seed: int = 0) -> dict:
    """Max relative error per suite over ``instances`` random cases."""
    start = time.perf_counter()
    out = {
        "cross_entropy": max(check_cross_entropy(seed + k) for k in range(instances)),
        "ntxent": max(check_ntxent(seed + k) for k in range(instances)),
        "network": max(check_network(seed + k) for k in range(instances)),
    }
    out["seconds"] = time.perf_counter() - start
    return out
