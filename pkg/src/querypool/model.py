"""Probabilistic classifiers trained by minibatch SGD on cross-entropy.

Two architectures satisfy the classifier contract (predict_proba + fit_round):
plain softmax regression and a one-hidden-layer ReLU MLP. Everything runs in
float64 so the finite-difference gradient checker can use tight tolerances.

Checkpoint format (little-endian): magic ``QPCK``, u32 version, u32 header
length, JSON header (arch, dims, seed, array shapes), then the raw float64
parameter arrays in layer order W0, b0[, W1, b1].
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_CKPT_MAGIC = b"QPCK"
_CKPT_VERSION = 1
_LOG_CLAMP = 1e-12

ARCHITECTURES = ("softmax", "mlp")


class ModelError(Exception):
    """Base class for classifier failures."""


class DimensionMismatch(ModelError):
    """Input feature dimension disagrees with the model."""


class NonFiniteLoss(ModelError):
    """Training diverged (non-finite loss or parameters); lower the learning rate."""


@dataclass
class TrainHyper:
    """SGD settings for one training round."""

    learning_rate: float = 0.1
    minibatch_size: int = 128
    epochs_per_round: int = 20
    l2: float = 0.0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be >= 1")
        if self.epochs_per_round < 1:
            raise ValueError("epochs_per_round must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")


@dataclass
class ModelParams:
    """Architecture descriptor plus parameter arrays in fixed layer order."""

    arch: str
    feature_dim: int
    num_classes: int
    hidden: int | None
    init_seed: int
    arrays: list[np.ndarray] = field(default_factory=list)

    def copy(self) -> "ModelParams":
        return ModelParams(
            arch=self.arch,
            feature_dim=self.feature_dim,
            num_classes=self.num_classes,
            hidden=self.hidden,
            init_seed=self.init_seed,
            arrays=[a.copy() for a in self.arrays],
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays)


def init_model(arch: str, feature_dim: int, num_classes: int, rng_seed: int, hidden: int = 128) -> ModelParams:
    """Fresh parameters: weights ~ N(0, 1/fan_in), biases zero, seeded."""
    if arch not in ARCHITECTURES:
        raise ValueError(f"arch must be one of {ARCHITECTURES}, got {arch!r}")
    if feature_dim < 1 or num_classes < 2:
        raise ValueError("feature_dim must be >= 1 and num_classes >= 2")
    rng = np.random.default_rng(rng_seed)
    if arch == "softmax":
        arrays = [
            rng.normal(0.0, 1.0 / np.sqrt(feature_dim), size=(feature_dim, num_classes)),
            np.zeros(num_classes),
        ]
        hidden_out = None
    else:
        if hidden < 1:
            raise ValueError("hidden width must be >= 1")
        arrays = [
            rng.normal(0.0, 1.0 / np.sqrt(feature_dim), size=(feature_dim, hidden)),
            np.zeros(hidden),
            rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, num_classes)),
            np.zeros(num_classes),
        ]
        hidden_out = hidden
    return ModelParams(arch, feature_dim, num_classes, hidden_out, rng_seed, arrays)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(model: ModelParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    """Returns (probs, hidden activations or None) for a 2-d batch."""
    if model.arch == "softmax":
        w, b = model.arrays
        return _softmax(x @ w + b), None
    w1, b1, w2, b2 = model.arrays
    h = np.maximum(x @ w1 + b1, 0.0)
    return _softmax(h @ w2 + b2), h


def predict_proba_batch(model: ModelParams, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a (n, feature_dim) batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.feature_dim:
        raise DimensionMismatch(f"expected (n, {model.feature_dim}) features, got {x.shape}")
    return _forward(model, x)[0]


def predict_proba(model: ModelParams, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a single example."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.feature_dim:
        raise DimensionMismatch(f"expected {model.feature_dim} features, got shape {x.shape}")
    return _forward(model, x[None, :])[0][0]


def _cross_entropy_sum(probs: np.ndarray, y: np.ndarray) -> float:
    picked = probs[np.arange(y.size), y]
    return float(-np.log(np.clip(picked, _LOG_CLAMP, 1.0)).sum())


def _grads(model: ModelParams, x: np.ndarray, y: np.ndarray, l2: float) -> tuple[list[np.ndarray], float]:
    """Mean-CE gradients for a minibatch; returns (grads, summed CE loss)."""
    n = y.size
    probs, h = _forward(model, x)
    loss_sum = _cross_entropy_sum(probs, y)
    g = probs.copy()
    g[np.arange(n), y] -= 1.0
    g /= n
    if model.arch == "softmax":
        w, _ = model.arrays
        return [x.T @ g + l2 * w, g.sum(axis=0)], loss_sum
    w1, _, w2, _ = model.arrays
    dw2 = h.T @ g + l2 * w2
    db2 = g.sum(axis=0)
    dh = g @ w2.T
    dh[h <= 0.0] = 0.0
    dw1 = x.T @ dh + l2 * w1
    db1 = dh.sum(axis=0)
    return [dw1, db1, dw2, db2], loss_sum


def fit_round(
    model: ModelParams,
    x: np.ndarray,
    y: np.ndarray,
    hyper: TrainHyper,
    rng_seed: int | list[int],
) -> tuple[ModelParams, float]:
    """One training round: epochs_per_round passes of minibatch SGD.

    The labeled set is reshuffled every epoch from a generator seeded with
    rng_seed, so results are bitwise reproducible. Returns the updated model
    and the mean cross-entropy observed over the final epoch.

    Raises:
        NonFiniteLoss: loss or parameters went non-finite (learning rate
            too high for the task).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = y.size
    if n == 0:
        raise ValueError("labeled set must be non-empty")
    if x.shape != (n, model.feature_dim):
        raise DimensionMismatch(f"expected ({n}, {model.feature_dim}) features, got {x.shape}")

    out = model.copy()
    rng = np.random.default_rng(rng_seed)
    epoch_loss = float("nan")
    # overflow here is not a bug but the divergence signal; detect, don't warn
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(hyper.epochs_per_round):
            perm = rng.permutation(n)
            total = 0.0
            for start in range(0, n, hyper.minibatch_size):
                batch = perm[start : start + hyper.minibatch_size]
                grads, loss_sum = _grads(out, x[batch], y[batch], hyper.l2)
                total += loss_sum
                for arr, grad in zip(out.arrays, grads):
                    arr -= hyper.learning_rate * grad
            epoch_loss = total / n
            if not np.isfinite(epoch_loss) or not out.all_finite():
                raise NonFiniteLoss(f"training diverged (epoch loss {epoch_loss})")
    return out, epoch_loss


@dataclass
class EvalResult:
    accuracy: float
    mean_loss: float
    per_class_accuracy: np.ndarray
    per_class_support: np.ndarray
    confusion: np.ndarray


def evaluate(model: ModelParams, x: np.ndarray, y: np.ndarray, num_classes: int) -> EvalResult:
    """Accuracy, mean CE loss, per-class accuracy/support, confusion counts.

    Classes absent from the set report accuracy 1.0 and support 0, keeping
    per-class curves NaN-free.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValueError("evaluation set must be non-empty")
    probs = predict_proba_batch(model, x)
    predicted = probs.argmax(axis=1)
    mean_loss = _cross_entropy_sum(probs, y) / y.size

    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (y, predicted), 1)
    support = confusion.sum(axis=1)
    correct = confusion.diagonal().astype(np.float64)
    per_class = np.where(support > 0, correct / np.maximum(support, 1), 1.0)
    return EvalResult(
        accuracy=float((predicted == y).mean()),
        mean_loss=mean_loss,
        per_class_accuracy=per_class,
        per_class_support=support,
        confusion=confusion,
    )


def _loss_single(model: ModelParams, x: np.ndarray, y: int) -> float:
    probs, _ = _forward(model, x[None, :])
    return _cross_entropy_sum(probs, np.array([y]))


def grad_check(
    model: ModelParams,
    x: np.ndarray,
    y: int,
    h: float = 1e-5,
    samples: int = 256,
    rng_seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks the cross-entropy of a single example. At least `samples`
    coordinates are probed (all of them when the model is small), chosen by
    a seeded draw. Relative error uses max(|analytic|, |numeric|, 1e-8) as
    the denominator so zero-gradient coordinates (dead ReLUs) compare clean.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    grads, _ = _grads(model, x[None, :], np.array([y]), l2=0.0)

    sizes = [a.size for a in model.arrays]
    total = sum(sizes)
    n_probe = min(total, max(samples, 200))
    rng = np.random.default_rng(rng_seed)
    flat_coords = np.sort(rng.choice(total, size=n_probe, replace=False))

    offsets = np.cumsum([0] + sizes)
    worst = 0.0
    work = model.copy()
    for coord in flat_coords:
        ai = int(np.searchsorted(offsets, coord, side="right") - 1)
        local = int(coord - offsets[ai])
        arr = work.arrays[ai]
        flat = arr.reshape(-1)
        original = flat[local]
        flat[local] = original + h
        plus = _loss_single(work, x, y)
        flat[local] = original - h
        minus = _loss_single(work, x, y)
        flat[local] = original
        numeric = (plus - minus) / (2.0 * h)
        analytic = grads[ai].reshape(-1)[local]
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


def save_model(model: ModelParams, path: str | Path) -> None:
    """Write a checkpoint that loads back bitwise-identical."""
    header = {
        "arch": model.arch,
        "feature_dim": model.feature_dim,
        "num_classes": model.num_classes,
        "hidden": model.hidden,
        "init_seed": model.init_seed,
        "shapes": [list(a.shape) for a in model.arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<II", _CKPT_VERSION, len(blob)))
        f.write(blob)
        for a in model.arrays:
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_model(path: str | Path) -> ModelParams:
    raw = Path(path).read_bytes()
    if raw[:4] != _CKPT_MAGIC:
        raise ModelError("not a model checkpoint (bad magic)")
    version, header_len = struct.unpack("<II", raw[4:12])
    if version != _CKPT_VERSION:
        raise ModelError(f"unsupported checkpoint version {version}")
    header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    arrays = []
    offset = 12 + header_len
    for shape in header["shapes"]:
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=size, offset=offset).reshape(shape)
        arrays.append(arr.astype(np.float64).copy())
        offset += size * 8
    if offset != len(raw):
        raise ModelError("checkpoint length mismatch")
    return ModelParams(
        arch=header["arch"],
        feature_dim=header["feature_dim"],
        num_classes=header["num_classes"],
        hidden=header["hidden"],
        init_seed=header["init_seed"],
        arrays=arrays,
    )
