"""Training loop tying FundusAug, the hybrid loss and DCR weights together."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import dcr as dcr_mod
from . import losses
from .fundusaug import TRANSFORMS, AugConfig, apply_plan, sample_plan, weak_augment
from .imagecore import ImageRgb, inscribed_circle_mask, load_image, resize_array
from .model import NetConfig, OptimState, TinyNet, backward, forward, lr_at, sgd_step
from .rng import make_rng

log = logging.getLogger(__name__)

# method -> (visual transforms, degradation transforms, DCR, hybrid loss)
METHODS = {
    "erm": (False, False, False, False),
    "A": (True, False, False, False),
    "B": (False, True, False, False),
    "C": (False, False, True, False),
    "D": (False, False, False, True),
    "E": (True, True, False, False),
    "F": (True, True, True, False),
    "G": (True, True, False, True),
    "gdrnet": (True, True, True, True),
}

# The library defaults keep the reference learning rate, which is tuned for a
# pretrained backbone; the small net here trains from scratch and needs a
# larger step to move within a 30-epoch budget.
DESK_PRESET = {"lr_initial": 0.05, "lr_final": 0.005}


def normalize_method(method: str) -> str:
    for name in METHODS:
        if method.lower() == name.lower():
            return name
    raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")


@dataclass
class TrainConfig:
    method: str = "gdrnet"
    epochs: int = 30
    batch_size: int = 16
    lr_initial: float = 1e-3
    lr_final: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    tau: float = 0.1
    beta: float = 0.5
    # "linear" decays 1 -> 0 over the epochs; "constant" holds alpha_value
    alpha_mode: str = "linear"
    alpha_value: float = 0.0
    seed: int = 0
    aug_probability: float = 0.5
    symmetric_contrastive: bool = False
    dcr_on_contrastive: bool = False
    dcr_conditional: bool = False
    # "loss" multiplies per-sample losses, "sampling" draws batches by weight
    dcr_mode: str = "loss"
    input_size: int = 64
    pool: int = 1
    trunk: str = "conv"
    conv_channels: tuple = (8, 16)
    hidden: tuple = (64,)
    proj_hidden: int = 64
    proj_dim: int = 32
    n_classes: int = 5
    activation: str = "relu"
    head_init: str = "small"
    # None follows the method; True/False forces the component on or off
    use_visual: object = None
    use_degradation: object = None
    use_dcr: object = None
    use_dahloss: object = None
    # explicit per-transform overrides in AugConfig "name.field" form
    aug: dict = field(default_factory=dict)

    def __post_init__(self):
        self.method = normalize_method(self.method)
        self.hidden = tuple(int(h) for h in self.hidden)
        self.conv_channels = tuple(int(c) for c in self.conv_channels)
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.alpha_mode not in ("linear", "constant"):
            raise ValueError(f"alpha_mode must be 'linear' or 'constant', got {self.alpha_mode!r}")
        if self.dcr_mode not in ("loss", "sampling"):
            raise ValueError(f"dcr_mode must be 'loss' or 'sampling', got {self.dcr_mode!r}")
        if not 0.0 <= self.alpha_value <= 1.0:
            raise ValueError("alpha_value must lie in [0, 1]")

    @property
    def components(self):
        comp = dict(zip(("visual", "degradation", "dcr", "dahloss"), METHODS[self.method]))
        for name in comp:
            forced = getattr(self, f"use_{name}")
            if forced is not None:
                comp[name] = bool(forced)
        return comp

    def aug_config(self) -> AugConfig:
        comp = self.components
        cfg = AugConfig.default(comp["visual"], comp["degradation"], self.aug_probability)
        return AugConfig.from_mapping(self.aug, cfg) if self.aug else cfg

    def net_config(self) -> NetConfig:
        return NetConfig(
            input_size=self.input_size, pool=self.pool, hidden=self.hidden,
            proj_hidden=self.proj_hidden, proj_dim=self.proj_dim, n_classes=self.n_classes,
            activation=self.activation, head_init=self.head_init, trunk=self.trunk,
            conv_channels=self.conv_channels,
        )

    def alpha(self, epoch: int) -> float:
        if not self.components["dahloss"]:
            return 0.0
        if self.alpha_mode == "constant":
            return self.alpha_value
        return losses.alpha_at(losses.AlphaSchedule(self.epochs), epoch)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["conv_channels"] = list(self.conv_channels)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:12]

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class Dataset:
    images: np.ndarray  # (N, H, W, 3)
    labels: np.ndarray
    domains: list
    paths: list = field(default_factory=list)

    def __len__(self):
        return len(self.labels)

    def subset(self, domains) -> "Dataset":
        keep = [k for k, d in enumerate(self.domains) if d in set(domains)]
        return Dataset(self.images[keep], self.labels[keep],
                       [self.domains[k] for k in keep], [self.paths[k] for k in keep] if self.paths else [])


def load_dataset(records, root: str, input_size: int = 64, cache: dict = None) -> Dataset:
    """Load manifest images (resized to ``input_size``) into one array."""
    images = np.empty((len(records), input_size, input_size, 3))
    for k, r in enumerate(records):
        path = os.path.join(root, r.path)
        if cache is not None and path in cache:
            data = cache[path]
        else:
            data = load_image(path).data
            if data.shape[:2] != (input_size, input_size):
                data = resize_array(data, input_size, input_size)
            if cache is not None:
                cache[path] = data
        images[k] = data
    return Dataset(images, np.array([r.grade for r in records], dtype=np.intp),
                   [r.domain for r in records], [r.path for r in records])


@dataclass
class History:
    epochs: list = field(default_factory=list)  # per-epoch dicts
    step_losses: list = field(default_factory=list)

    def to_dict(self):
        return {"epochs": self.epochs, "step_losses": self.step_losses}


def _strong_views(ds: Dataset, idx, aug: AugConfig, mask, seed: int, epoch: int):
    if not any(aug.transforms[n].enabled for n in TRANSFORMS):
        return ds.images[idx]
    out = np.empty((len(idx),) + ds.images.shape[1:])
    for j, i in enumerate(idx):
        rng = make_rng(seed, "strong", epoch, int(i))
        plan = sample_plan(mask, aug, rng)
        out[j] = apply_plan(ImageRgb(ds.images[i], mask), plan).data
    return out


def _weak_views(ds: Dataset, idx, mask, seed: int, epoch: int):
    out = np.empty((len(idx),) + ds.images.shape[1:])
    for j, i in enumerate(idx):
        out[j] = weak_augment(ImageRgb(ds.images[i], mask), make_rng(seed, "weak", epoch, int(i))).data
    return out


def dcr_table_for(ds: Dataset, config: TrainConfig):
    domains = sorted(set(ds.domains))
    counts = dcr_mod.DomainClassCounts.from_labels(ds.domains, ds.labels, config.n_classes, domains)
    return dcr_mod.build_table(counts, config.beta, conditional=config.dcr_conditional)


def train(config: TrainConfig, ds: Dataset, progress=None):
    """Train a TinyNet on ``ds``; returns ``(net, history)``.

    Per batch: strong views via FundusAug (identity when the method has no
    augmentation), weak views for the contrastive term, hybrid loss with the
    epoch's alpha, DCR sample weights, manual backward and one SGD step.
    """
    n = len(ds)
    if n == 0:
        raise ValueError("training set is empty")
    if len(np.unique(ds.labels)) < 2:
        raise ValueError("training set needs at least 2 classes")
    if config.batch_size > n:
        raise ValueError(f"batch_size {config.batch_size} exceeds training set size {n}")

    comp = config.components
    aug = config.aug_config()
    mask = inscribed_circle_mask(config.input_size, config.input_size)
    net = TinyNet(config.net_config(), rng=make_rng(config.seed, "init"))
    state = OptimState(config.lr_initial, config.momentum, config.weight_decay)

    sample_w = np.ones(n)
    sampling_p = None
    if comp["dcr"]:
        table = dcr_table_for(ds, config)
        per_sample = np.array([dcr_mod.sample_weight(table, d, int(y)) for d, y in zip(ds.domains, ds.labels)])
        if config.dcr_mode == "loss":
            sample_w = per_sample
        else:
            sampling_p = per_sample / per_sample.sum()

    history = History()
    n_batches = n // config.batch_size
    for epoch in range(config.epochs):
        alpha = config.alpha(epoch)
        state.lr = lr_at(config.lr_initial, config.lr_final, config.epochs, epoch)
        order_rng = make_rng(config.seed, "order", epoch)
        if sampling_p is None:
            order = order_rng.permutation(n)
        else:
            order = order_rng.choice(n, size=n_batches * config.batch_size, p=sampling_p)
        sums = {"loss": 0.0, "sup": 0.0, "scon": 0.0}
        for b in range(n_batches):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            y = ds.labels[idx]
            w = sample_w[idx]
            strong = _strong_views(ds, idx, aug, mask, config.seed, epoch)
            logits, emb, cache = forward(net, strong)
            sup = losses.cross_entropy(logits, y, w)
            if comp["dahloss"]:
                weak = _weak_views(ds, idx, mask, config.seed, epoch)
                _, emb_w, cache_w = forward(net, weak)
                scon = losses.ntxent(emb, emb_w, config.tau, symmetric=config.symmetric_contrastive,
                                     weights=w if config.dcr_on_contrastive else None)
                total, (gz,), (ges, gew) = losses.dahloss_combine(sup, scon, alpha)
                grads = backward(net, cache, gz, ges)
                grads_w = backward(net, cache_w, np.zeros_like(gz), gew)
                grads = {k: grads[k] + grads_w[k] for k in grads}
                sums["scon"] += scon[0]
            else:
                total, gz = sup
                grads = backward(net, cache, gz, np.zeros_like(emb))
            sums["loss"] += total
            sums["sup"] += sup[0]
            history.step_losses.append(total)
            sgd_step(net, grads, state)
        row = {"epoch": epoch, "alpha": alpha, "lr": state.lr,
               **{k: v / max(n_batches, 1) for k, v in sums.items()}}
        history.epochs.append(row)
        if progress is not None:
            progress(row)
        log.debug("epoch %d: %s", epoch, row)
    return net, history


def predict_proba(net: TinyNet, images: np.ndarray, batch: int = 256) -> np.ndarray:
    out = []
    for k in range(0, len(images), batch):
        logits, _, _ = forward(net, images[k:k + batch])
        out.append(losses.softmax(logits))
    return np.concatenate(out, axis=0)
