"""Uncertainty measures over predicted class probabilities, plus selection.

Four measures are implemented together with a random baseline:

    lmu      best-versus-worst margin, most informative at the MINIMUM
    smu      best-versus-second-best margin, most informative at the MINIMUM
    lcu      one minus the top probability, most informative at the MAXIMUM
    entropy  Shannon entropy in nats, most informative at the MAXIMUM

`informativeness` folds those mixed min/max rules into a single orientation
(higher score = more worth labeling) so one top-k routine serves every
measure, the random baseline included.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

_ENTROPY_CLAMP = 1e-12


class Metric(enum.Enum):
    """Selection strategy; `random` is the uniform-sampling baseline."""

    LMU = "lmu"
    SMU = "smu"
    LCU = "lcu"
    ENTROPY = "entropy"
    RANDOM = "random"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def from_string(cls, name: str) -> "Metric":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown metric {name!r}; expected one of: {valid}") from None


@dataclass(frozen=True)
class Score:
    """Oriented informativeness value: higher means more worth labeling."""

    value: float
    metric: Metric


def validate_prob_vector(p) -> np.ndarray:
    """Check the class-probability invariants and return p as float64."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise ValueError("probability vector must be 1-d with at least 2 classes")
    if p.min() < 0.0:
        raise ValueError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > 1e-6:
        raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
    return p


def lmu(p) -> float:
    """Best-versus-worst margin: max(p) - min(p). Select the minimum."""
    p = validate_prob_vector(p)
    return float(p.max() - p.min())


def smu(p) -> float:
    """Best-versus-second-best margin. Select the minimum; exact ties give 0."""
    p = validate_prob_vector(p)
    top2 = np.partition(p, p.size - 2)[-2:]
    return float(top2.max() - top2.min())


def lcu(p) -> float:
    """One minus the top probability. Select the maximum."""
    p = validate_prob_vector(p)
    return float(1.0 - p.max())


def entropy(p) -> float:
    """Shannon entropy in nats with 0*log(0) := 0. Select the maximum.

    The clamp applies inside the log only, so appending an exact-zero
    outcome leaves the value untouched.
    """
    p = validate_prob_vector(p)
    terms = np.where(p > 0.0, -p * np.log(np.maximum(p, _ENTROPY_CLAMP)), 0.0)
    return float(terms.sum())


def informativeness(metric: Metric, p, rng: np.random.Generator | None = None) -> Score:
    """Oriented score whose argmax reproduces each measure's selection rule.

    Margins flip sign (they select at their minimum); lcu and entropy pass
    through. The random baseline ignores p and draws uniformly from `rng`.
    """
    if metric is Metric.LMU:
        return Score(-lmu(p), metric)
    if metric is Metric.SMU:
        return Score(-smu(p), metric)
    if metric is Metric.LCU:
        return Score(lcu(p), metric)
    if metric is Metric.ENTROPY:
        return Score(entropy(p), metric)
    if metric is Metric.RANDOM:
        if rng is None:
            raise ValueError("random metric needs an rng stream")
        validate_prob_vector(p)
        return Score(float(rng.random()), metric)
    raise ValueError(f"unhandled metric {metric!r}")


def score_pool(metric: Metric, probs: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
    """Vectorized informativeness for a (pool_size, K) probability matrix.

    Row i equals informativeness(metric, probs[i]).value; for the random
    baseline the draws come from `rng` in row order.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError("probs must be 2-d (pool_size, num_classes)")
    if metric is Metric.RANDOM:
        if rng is None:
            raise ValueError("random metric needs an rng stream")
        return rng.random(probs.shape[0])
    if metric is Metric.LMU:
        return -(probs.max(axis=1) - probs.min(axis=1))
    if metric is Metric.SMU:
        ordered = np.sort(probs, axis=1)
        return -(ordered[:, -1] - ordered[:, -2])
    if metric is Metric.LCU:
        return 1.0 - probs.max(axis=1)
    if metric is Metric.ENTROPY:
        terms = np.where(probs > 0.0, -probs * np.log(np.maximum(probs, _ENTROPY_CLAMP)), 0.0)
        return terms.sum(axis=1)
    raise ValueError(f"unhandled metric {metric!r}")


def select_k(scores: Sequence[Score] | np.ndarray, k: int) -> np.ndarray:
    """Indices of the k highest scores, ties to the lowest index, sorted ascending.

    Short inputs return every index. Deterministic: a stable descending sort
    decides ties in favor of earlier positions.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if isinstance(scores, np.ndarray):
        values = scores.astype(np.float64, copy=False)
    else:
        seq = list(scores)
        if seq and isinstance(seq[0], Score):
            values = np.array([s.value for s in seq], dtype=np.float64)
        else:
            values = np.asarray(seq, dtype=np.float64)
    if values.size == 0:
        raise ValueError("scores must be non-empty")
    order = np.argsort(-values, kind="stable")
    return np.sort(order[: min(k, values.size)]).astype(np.int64)
