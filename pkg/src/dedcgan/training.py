"""Adversarial + classification training, the CNN baseline loop, and evaluation.

Images enter the networks remapped from ``[0, 1]`` to ``[-1, 1]`` so real
samples share the generator's tanh range.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .exceptions import Divergence, EmptyDataset, NonFinite, ShapeMismatch
from .models import ACTIVATIONS, KERNELS, BaselineCNN, Discriminator, Generator
from .nn import functional as F
from .optim import Adam
from .rng import generator_state, stream
from .tensor import Tensor, backward, log_softmax, no_grad


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    adv_weight: float = 1.0
    cls_weight: float = 1.0
    label_smoothing: float = 0.9
    latent_dim: int = 100
    seed: int = 0
    activation: str = "selu"
    kernel: str = "deformable"
    kernel_size: int = 4
    d_channels: tuple = (16, 32, 64, 128)
    g_channels: tuple = (64, 32, 16, 8)
    cnn_channels: tuple = (24, 48, 96, 192)
    augment_with_generated: bool = False
    augment_weight: float = 0.5
    dtype: str = "float32"

    def __post_init__(self):
        self.d_channels = tuple(int(c) for c in self.d_channels)
        self.g_channels = tuple(int(c) for c in self.g_channels)
        self.cnn_channels = tuple(int(c) for c in self.cnn_channels)
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        for name in ("lr_g", "lr_d"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("adv_weight", "cls_weight", "augment_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 < self.label_smoothing <= 1.0:
            raise ValueError("label_smoothing must be in (0, 1]")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("d_channels", "g_channels", "cnn_channels"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class TrainResult:
    model: object                      # Discriminator or BaselineCNN
    generator: Generator | None
    history: list[dict]
    config: TrainConfig
    rng_state: dict = field(default_factory=dict)
    epochs_run: int = 0


def to_network_range(images: np.ndarray, dtype=np.float32) -> np.ndarray:
    return (np.asarray(images, dtype=np.float64) * 2.0 - 1.0).astype(dtype)


def _check_data(images, labels, n_classes=None):
    images = np.asarray(images)
    labels = np.asarray(labels, dtype=np.int64)
    if images.shape[0] == 0:
        raise EmptyDataset("no training samples")
    if images.ndim != 4:
        raise ShapeMismatch(f"expected images [n, C, H, W], got {images.shape}")
    if labels.shape != (images.shape[0],):
        raise ShapeMismatch(f"{labels.shape[0] if labels.ndim else 0} labels for {images.shape[0]} images")
    k = int(labels.max()) + 1 if n_classes is None else int(n_classes)
    if k < 2:
        raise ValueError("need at least two classes")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    return images, labels, k


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for s in range(0, n, batch_size):
        idx = order[s:s + batch_size]
        if idx.size >= 2:  # batch statistics need at least two samples
            yield idx


def _finite(value: float, what: str, epoch: int, step: int) -> float:
    if not math.isfinite(value):
        raise Divergence(f"{what} became {value} at epoch {epoch}, step {step}")
    return value


def _fit_loop(epochs, n, cfg, rng, step_fn, val_fn):
    history = []
    for epoch in range(epochs):
        sums: dict[str, float] = {}
        steps = 0
        for step, idx in enumerate(_batches(n, cfg.batch_size, rng)):
            try:
                stats = step_fn(idx, rng)
            except NonFinite as exc:
                raise Divergence(f"non-finite values at epoch {epoch}, step {step}: {exc}") from exc
            for k, v in stats.items():
                sums[k] = sums.get(k, 0.0) + _finite(v, k, epoch, step)
            steps += 1
        row = {"epoch": epoch + 1}
        row.update({k: v / max(steps, 1) for k, v in sums.items()})
        if val_fn is not None:
            row["val_accuracy"] = val_fn()
        history.append(row)
    return history


def not_fake_loss(raw_logits: Tensor, k: int) -> Tensor:
    """Mean ``-log sum_{c<k} softmax(z)_c``, i.e. ``-log(1 - P(fake))``, computed in log space."""
    lp = log_softmax(raw_logits, axis=1)[:, :k]
    shift = Tensor(lp.data.max(axis=1, keepdims=True)).broadcast_to(lp.shape)
    log_real = (lp - shift).exp().sum(axis=1).log() + shift[:, 0]
    return -log_real.mean()


def train_gan(images, labels, cfg: TrainConfig | None = None, n_classes: int | None = None,
              val: tuple | None = None) -> TrainResult:
    """Alternating D/G updates; D doubles as a ``K + 1``-way classifier.

    D step: cross-entropy of real samples against their class (smoothed
    towards the fake slot by ``1 - label_smoothing``) plus cross-entropy of
    generated samples against the fake slot.  G step: cross-entropy of
    ``D(G(z))`` against a uniform distribution over the real classes.
    """
    cfg = cfg or TrainConfig()
    images, labels, k = _check_data(images, labels, n_classes)
    x_all = to_network_range(images, np.float32 if cfg.dtype == "float32" else np.float64)
    n, c, h, w = x_all.shape
    disc = Discriminator(k, c, h, cfg.d_channels, cfg.kernel_size, cfg.activation, cfg.kernel,
                         seed=cfg.seed, dtype=cfg.dtype)
    gen = Generator(cfg.latent_dim, c, h, cfg.g_channels, seed=cfg.seed, dtype=cfg.dtype)
    opt_d = Adam(disc.parameters(), cfg.lr_d, (cfg.beta1, cfg.beta2))
    opt_g = Adam(gen.parameters(), cfg.lr_g, (cfg.beta1, cfg.beta2))
    rng = stream(cfg.seed, "train", "gan")

    def step(idx, rng):
        b = idx.size
        x = Tensor(x_all[idx])
        y = labels[idx]
        real_t = np.zeros((b, k + 1))
        real_t[np.arange(b), y] = cfg.label_smoothing
        real_t[:, k] = 1.0 - cfg.label_smoothing
        fake_t = np.zeros(b, dtype=np.int64) + k

        fake = gen(gen.sample_latent(b, rng))
        opt_d.zero_grad()
        real_logits = disc(x)
        loss_real = F.cross_entropy(real_logits, real_t)
        fake_logits = disc(fake.detach())
        loss_fake = F.cross_entropy(fake_logits, fake_t)
        loss_d = loss_real * cfg.cls_weight + loss_fake * cfg.adv_weight
        if cfg.augment_with_generated:
            # pseudo-label generated samples with D's own real-class guess
            pseudo = np.argmax(fake_logits.data[:, :k], axis=1)
            loss_d = loss_d + F.cross_entropy(disc(fake.detach()), pseudo) * cfg.augment_weight
        backward(loss_d)
        opt_d.step()

        opt_g.zero_grad()
        loss_g = not_fake_loss(disc(fake), k)
        backward(loss_g)
        opt_g.step()
        acc = float(np.mean(np.argmax(real_logits.data[:, :k], axis=1) == y))
        return {"d_loss": loss_d.item(), "d_real_loss": loss_real.item(),
                "d_fake_loss": loss_fake.item(), "g_loss": loss_g.item(), "train_accuracy": acc}

    val_fn = None
    if val is not None:
        vx, vy = val
        val_fn = lambda: accuracy(disc, vx, vy)  # noqa: E731
    history = _fit_loop(cfg.epochs, n, cfg, rng, step, val_fn)
    disc.eval()
    return TrainResult(disc, gen, history, cfg, generator_state(rng), cfg.epochs)


def train_cnn(images, labels, cfg: TrainConfig | None = None, n_classes: int | None = None,
              val: tuple | None = None) -> TrainResult:
    """Plain supervised cross-entropy training of the pooling baseline."""
    cfg = cfg or TrainConfig()
    images, labels, k = _check_data(images, labels, n_classes)
    x_all = to_network_range(images, np.float32 if cfg.dtype == "float32" else np.float64)
    n, c, h, w = x_all.shape
    model = BaselineCNN(k, c, h, cfg.cnn_channels, seed=cfg.seed, dtype=cfg.dtype)
    opt = Adam(model.parameters(), cfg.lr_d, (cfg.beta1, cfg.beta2))
    rng = stream(cfg.seed, "train", "cnn")

    def step(idx, rng):
        opt.zero_grad()
        logits = model(Tensor(x_all[idx]))
        loss = F.cross_entropy(logits, labels[idx])
        backward(loss)
        opt.step()
        acc = float(np.mean(np.argmax(logits.data, axis=1) == labels[idx]))
        return {"loss": loss.item(), "train_accuracy": acc}

    val_fn = None
    if val is not None:
        vx, vy = val
        val_fn = lambda: accuracy(model, vx, vy)  # noqa: E731
    history = _fit_loop(cfg.epochs, n, cfg, rng, step, val_fn)
    model.eval()
    return TrainResult(model, None, history, cfg, generator_state(rng), cfg.epochs)


# ------------------------------------------------------------- inference


def logits(model, images, batch_size: int = 64) -> np.ndarray:
    """Eval-mode logits for ``images`` in ``[0, 1]``; training flag restored afterwards."""
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[None]
    was_training = model.training
    model.eval()
    dt = next(iter(model.parameters())).dtype
    out = []
    try:
        with no_grad():
            for s in range(0, images.shape[0], batch_size):
                out.append(model(Tensor(to_network_range(images[s:s + batch_size], dt))).data)
    finally:
        model.train(was_training)
    return np.concatenate(out) if out else np.zeros((0, 0))


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def class_probabilities(raw_logits: np.ndarray, n_classes: int) -> np.ndarray:
    """Softmax over the first ``n_classes`` logits; any extra (fake) slot is dropped."""
    raw_logits = np.asarray(raw_logits, dtype=np.float64)
    if raw_logits.shape[-1] < n_classes:
        raise ShapeMismatch(f"{raw_logits.shape[-1]} logits for {n_classes} classes")
    return _softmax(raw_logits[..., :n_classes])


def classify(model, images) -> np.ndarray:
    """Class distribution over the real classes for one image ``[C,H,W]`` or a batch."""
    single = np.asarray(images).ndim == 3
    p = class_probabilities(logits(model, images), model.n_classes)
    return p[0] if single else p


def realness(disc: Discriminator, images, network_range: bool = False) -> np.ndarray:
    """``1 - P(fake)`` per sample under the full ``K + 1``-way softmax.

    With ``network_range=True`` the images are taken as already in ``[-1, 1]``
    (generator output).
    """
    x = np.asarray(images)
    if network_range:
        x = (x + 1.0) / 2.0
    return 1.0 - _softmax(logits(disc, x).astype(np.float64))[:, -1]


def predict(model, images) -> np.ndarray:
    return np.argmax(classify(model, images), axis=-1)


def accuracy(model, images, labels) -> float:
    return float(np.mean(predict(model, images) == np.asarray(labels)))


def generate(gen: Generator, count: int, seed: int = 0) -> np.ndarray:
    """``count`` samples in ``(-1, 1)``, deterministic in ``seed``."""
    rng = stream(seed, "generate")
    with no_grad():
        return gen(gen.sample_latent(count, rng)).data


# ------------------------------------------------------------- evaluation


@dataclass
class Metrics:
    accuracy: float
    per_class_accuracy: list[float]
    confusion: list[list[int]]
    median_ms: float
    params: int
    losses: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return m


def time_single_sample(model, image, passes: int = 100, warmup: int = 10) -> np.ndarray:
    """Wall-clock milliseconds of ``passes`` single-sample eval forwards."""
    x = Tensor(to_network_range(np.asarray(image)[None], next(iter(model.parameters())).dtype))
    was_training = model.training
    model.eval()
    out = np.empty(passes)
    try:
        with no_grad():
            for _ in range(warmup):
                model(x)
            for i in range(passes):
                t0 = time.perf_counter()
                model(x)
                out[i] = (time.perf_counter() - t0) * 1e3
    finally:
        model.train(was_training)
    return out


def evaluate(model, images, labels, timing_passes: int = 100, history=None) -> Metrics:
    """Accuracy, per-class accuracy, confusion matrix and median single-sample latency."""
    images = np.asarray(images)
    labels = np.asarray(labels, dtype=np.int64)
    if images.shape[0] == 0:
        raise EmptyDataset("nothing to evaluate")
    k = model.n_classes
    pred = predict(model, images)
    cm = confusion_matrix(labels, pred, k)
    rows = cm.sum(axis=1)
    per_class = [float(cm[i, i] / rows[i]) if rows[i] else float("nan") for i in range(k)]
    ms = time_single_sample(model, images[0], timing_passes) if timing_passes > 0 else np.array([np.nan])
    return Metrics(float(np.trace(cm) / cm.sum()), per_class, cm.tolist(), float(np.median(ms)),
                   model.num_parameters(), list(history or []))
