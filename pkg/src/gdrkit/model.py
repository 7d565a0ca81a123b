"""TinyNet: a desk-scale classifier + embedder with manual backprop.

Layout with the default convolutional trunk::

    images -> [3x3 conv, stride 2 + act] * len(conv_channels)
           -> global average pool -> [dense + act] * len(hidden)   (trunk)
    trunk -> dense                                                (logits)
    trunk -> dense + act -> dense -> l2-normalize                 (embedding)

``trunk="mlp"`` replaces the convolutions and pooling by an average-pool
plus flatten of the raw pixels. Everything is float64 and deterministic
given the parameters.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

FORMAT_VERSION = 1


@dataclass
class NetConfig:
    input_size: int = 64
    pool: int = 1
    hidden: tuple = (64,)
    proj_hidden: int = 64
    proj_dim: int = 32
    n_classes: int = 5
    activation: str = "relu"
    head_init: str = "small"  # "small" or "zeros"
    trunk: str = "conv"  # "conv" or "mlp"
    conv_channels: tuple = (8, 16)

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.conv_channels = tuple(int(c) for c in self.conv_channels)
        if self.trunk not in ("conv", "mlp"):
            raise ValueError(f"unknown trunk {self.trunk!r}")
        if self.input_size % self.pool:
            raise ValueError("input_size must be divisible by pool")
        if self.activation not in _ACT:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not self.hidden:
            raise ValueError("at least one trunk layer is required")

    @property
    def in_features(self) -> int:
        if self.trunk == "conv":
            return self.conv_channels[-1] if self.conv_channels else 3
        side = self.input_size // self.pool
        return side * side * 3


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_grad(pre, out):
    return (pre > 0).astype(np.float64)


def _tanh_grad(pre, out):
    return 1.0 - out * out


_ACT = {"relu": (_relu, _relu_grad), "tanh": (np.tanh, _tanh_grad)}


class StaleCacheError(RuntimeError):
    pass


class TinyNet:
    def __init__(self, config: NetConfig, params: dict = None, rng: np.random.Generator = None):
        self.config = config
        self.version = 0
        if params is None:
            params = init_params(config, rng if rng is not None else np.random.default_rng(0))
        self.params = params

    def param_names(self):
        return list(self.params)

    def copy(self) -> "TinyNet":
        net = TinyNet(self.config, {k: v.copy() for k, v in self.params.items()})
        net.version = self.version
        return net


def init_params(config: NetConfig, rng: np.random.Generator) -> dict:
    """He-style normal init for hidden layers, small or zero classifier head."""
    params = {}
    if config.trunk == "conv":
        c_in = 3
        for k, c_out in enumerate(config.conv_channels):
            fan_in = 9 * c_in
            params[f"conv{k}.W"] = rng.normal(0.0, math.sqrt(2.0 / fan_in), (fan_in, c_out))
            params[f"conv{k}.b"] = np.zeros(c_out)
            c_in = c_out
    dims = (config.in_features,) + config.hidden
    for k in range(len(config.hidden)):
        fan_in = dims[k]
        params[f"trunk{k}.W"] = rng.normal(0.0, math.sqrt(2.0 / fan_in), (fan_in, dims[k + 1]))
        params[f"trunk{k}.b"] = np.zeros(dims[k + 1])
    d = dims[-1]
    if config.head_init == "zeros":
        params["cls.W"] = np.zeros((d, config.n_classes))
    else:
        params["cls.W"] = rng.normal(0.0, 0.01, (d, config.n_classes))
    params["cls.b"] = np.zeros(config.n_classes)
    params["proj0.W"] = rng.normal(0.0, math.sqrt(2.0 / d), (d, config.proj_hidden))
    params["proj0.b"] = np.zeros(config.proj_hidden)
    params["proj1.W"] = rng.normal(0.0, math.sqrt(1.0 / config.proj_hidden), (config.proj_hidden, config.proj_dim))
    params["proj1.b"] = np.zeros(config.proj_dim)
    return params


def preprocess(config: NetConfig, images: np.ndarray) -> np.ndarray:
    """Average-pool ``(B, H, W, 3)`` images by ``pool`` and center to [-1, 1].

    The MLP trunk additionally flattens the result.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[1:] != (config.input_size, config.input_size, 3):
        raise ValueError(
            f"expected images of shape (B, {config.input_size}, {config.input_size}, 3), got {images.shape}"
        )
    b, p = images.shape[0], config.pool
    side = config.input_size // p
    if p > 1:
        images = images.reshape(b, side, p, side, p, 3).mean(axis=(2, 4))
    x = (images - 0.5) * 2.0
    return x if config.trunk == "conv" else x.reshape(b, -1)


CONV_K, CONV_STRIDE, CONV_PAD = 3, 2, 1


def _im2col(x: np.ndarray):
    """``(B, H, W, C)`` -> ``(B*Ho*Wo, 9*C)`` patches of a 3x3, stride-2, pad-1 conv."""
    b, h, w, c = x.shape
    ho = (h + 2 * CONV_PAD - CONV_K) // CONV_STRIDE + 1
    wo = (w + 2 * CONV_PAD - CONV_K) // CONV_STRIDE + 1
    xp = np.pad(x, ((0, 0), (CONV_PAD, CONV_PAD), (CONV_PAD, CONV_PAD), (0, 0)))
    cols = np.empty((b, ho, wo, CONV_K * CONV_K, c))
    for i in range(CONV_K):
        for j in range(CONV_K):
            cols[:, :, :, i * CONV_K + j, :] = xp[:, i:i + CONV_STRIDE * ho:CONV_STRIDE,
                                                  j:j + CONV_STRIDE * wo:CONV_STRIDE, :]
    return cols.reshape(b * ho * wo, CONV_K * CONV_K * c), (b, ho, wo)


def _col2im(gcols: np.ndarray, x_shape, out_shape) -> np.ndarray:
    b, h, w, c = x_shape
    _, ho, wo = out_shape
    gcols = gcols.reshape(b, ho, wo, CONV_K * CONV_K, c)
    gxp = np.zeros((b, h + 2 * CONV_PAD, w + 2 * CONV_PAD, c))
    for i in range(CONV_K):
        for j in range(CONV_K):
            gxp[:, i:i + CONV_STRIDE * ho:CONV_STRIDE, j:j + CONV_STRIDE * wo:CONV_STRIDE, :] += \
                gcols[:, :, :, i * CONV_K + j, :]
    return gxp[:, CONV_PAD:CONV_PAD + h, CONV_PAD:CONV_PAD + w, :]


def forward(net: TinyNet, images):
    """Returns ``(logits, embeddings, cache)``; embeddings rows are unit-norm."""
    cfg = net.config
    act, _ = _ACT[cfg.activation]
    p = net.params
    x = preprocess(cfg, images)
    conv_cache = []
    if cfg.trunk == "conv":
        for k in range(len(cfg.conv_channels)):
            cols, oshape = _im2col(x)
            pre = cols @ p[f"conv{k}.W"] + p[f"conv{k}.b"]
            out = act(pre)
            conv_cache.append((x.shape, oshape, cols, pre, out))
            x = out.reshape(oshape + (-1,))
        x = x.mean(axis=(1, 2))
    trunk_in, trunk_pre, h = [], [], x
    for k in range(len(cfg.hidden)):
        trunk_in.append(h)
        pre = h @ p[f"trunk{k}.W"] + p[f"trunk{k}.b"]
        trunk_pre.append(pre)
        h = act(pre)
    logits = h @ p["cls.W"] + p["cls.b"]
    ppre = h @ p["proj0.W"] + p["proj0.b"]
    ph = act(ppre)
    u = ph @ p["proj1.W"] + p["proj1.b"]
    norm = np.sqrt((u * u).sum(axis=1, keepdims=True))
    norm = np.maximum(norm, 1e-12)
    emb = u / norm
    cache = {
        "version": net.version,
        "conv": conv_cache,
        "trunk_in": trunk_in,
        "trunk_pre": trunk_pre,
        "trunk_out": h,
        "proj_pre": ppre,
        "proj_h": ph,
        "emb": emb,
        "norm": norm,
    }
    return logits, emb, cache


def backward(net: TinyNet, cache: dict, grad_logits, grad_emb) -> dict:
    """Parameter gradients given upstream partials of a scalar loss."""
    if cache["version"] != net.version:
        raise StaleCacheError("cache was produced before the last parameter update")
    cfg = net.config
    act, act_grad = _ACT[cfg.activation]
    p = net.params
    grads = {}
    gz = np.asarray(grad_logits, dtype=np.float64)
    ge = np.asarray(grad_emb, dtype=np.float64)
    h = cache["trunk_out"]

    grads["cls.W"] = h.T @ gz
    grads["cls.b"] = gz.sum(axis=0)
    gh = gz @ p["cls.W"].T

    # normalization Jacobian: (I - e e^T) / |u|
    e = cache["emb"]
    gu = (ge - e * (e * ge).sum(axis=1, keepdims=True)) / cache["norm"]
    grads["proj1.W"] = cache["proj_h"].T @ gu
    grads["proj1.b"] = gu.sum(axis=0)
    gph = (gu @ p["proj1.W"].T) * act_grad(cache["proj_pre"], cache["proj_h"])
    grads["proj0.W"] = h.T @ gph
    grads["proj0.b"] = gph.sum(axis=0)
    gh = gh + gph @ p["proj0.W"].T

    for k in reversed(range(len(cfg.hidden))):
        out = h if k == len(cfg.hidden) - 1 else cache["trunk_in"][k + 1]
        gpre = gh * act_grad(cache["trunk_pre"][k], out)
        grads[f"trunk{k}.W"] = cache["trunk_in"][k].T @ gpre
        grads[f"trunk{k}.b"] = gpre.sum(axis=0)
        if k > 0 or cache["conv"]:
            gh = gpre @ p[f"trunk{k}.W"].T

    conv_cache = cache["conv"]
    if conv_cache:
        # undo global average pooling
        x_shape, (b, ho, wo), *_ = conv_cache[-1]
        gx = np.broadcast_to(gh[:, None, :] / (ho * wo), (b, ho * wo, gh.shape[1])).reshape(b * ho * wo, -1)
        for k in reversed(range(len(conv_cache))):
            x_shape, oshape, cols, pre, out = conv_cache[k]
            gpre = gx * act_grad(pre, out)
            grads[f"conv{k}.W"] = cols.T @ gpre
            grads[f"conv{k}.b"] = gpre.sum(axis=0)
            if k > 0:
                gx = _col2im(gpre @ p[f"conv{k}.W"].T, x_shape, oshape).reshape(-1, x_shape[-1])
    return {name: grads[name] for name in p}


def add_grads(a: dict, b: dict) -> dict:
    return {k: a[k] + b[k] for k in a}


@dataclass
class OptimState:
    lr: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    buffers: dict = field(default_factory=dict)


def sgd_step(net: TinyNet, grads: dict, state: OptimState) -> None:
    """In-place SGD with momentum; weight decay is folded into the buffer.

    ``buf = momentum * buf + grad + wd * param``; ``param -= lr * buf``.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int((~np.isfinite(g)).sum())
            raise FloatingPointError(f"non-finite gradient in {name} ({bad} entries); step aborted")
    for name, param in net.params.items():
        if grads[name].shape != param.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
    for name, param in net.params.items():
        buf = state.buffers.get(name)
        step = grads[name] + state.weight_decay * param
        buf = step if buf is None else state.momentum * buf + step
        state.buffers[name] = buf
        param -= state.lr * buf
    net.version += 1


def lr_at(lr_initial: float, lr_final: float, epochs: int, epoch: int) -> float:
    """Cosine interpolation from ``lr_initial`` (first epoch) to ``lr_final`` (last)."""
    if not 0 <= epoch < epochs:
        raise ValueError(f"epoch {epoch} outside [0, {epochs})")
    if epochs == 1:
        return lr_initial
    t = epoch / (epochs - 1)
    return lr_final + (lr_initial - lr_final) * 0.5 * (1.0 + math.cos(math.pi * t))


def save_model(path, net: TinyNet, extra: dict = None) -> None:
    """Write a versioned ``.npz`` blob with the net config and ``extra`` metadata."""
    meta = {
        "format_version": FORMAT_VERSION,
        "net_config": asdict(net.config),
        "param_order": list(net.params),
        "extra": extra or {},
    }
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
             **{f"p:{k}": v for k, v in net.params.items()})
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_model(path):
    """Returns ``(net, extra)``."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {meta.get('format_version')}")
        params = {k: data[f"p:{k}"].copy() for k in meta["param_order"]}
    cfg = NetConfig(**meta["net_config"])
    return TinyNet(cfg, params), meta["extra"]
