"""The active-learning loop: train, evaluate, score the pool, select, label, move.

Each round works on an immutable snapshot and only commits once the oracle
has answered, so a timed-out round leaves the state untouched and can be
retried. All randomness is derived from (rng_seed, round, stream) triples,
which makes whole runs bitwise reproducible regardless of how many worker
threads score the pool.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Protocol, Sequence

import numpy as np

from .data import Dataset, SplitResult, SplitSpec, split, split_ids
from .model import ModelParams, TrainHyper, evaluate, fit_round, init_model, predict_proba_batch
from .uncertainty import Metric, score_pool, select_k

# rng stream ids, combined with (rng_seed, round)
_STREAM_TRAIN = 0
_STREAM_SELECT = 1
_STREAM_SUBSAMPLE = 2

# fixed scoring chunk: worker count must not change op shapes
_SCORE_CHUNK = 512

STOP_ERROR_BOUND = "error_bound"
STOP_POOL_EXHAUSTED = "pool_exhausted"
STOP_MAX_ROUNDS = "max_rounds"


class EngineError(Exception):
    """Base class for loop failures."""


class UnknownId(EngineError):
    """An oracle was asked about an id that is not in its dataset."""


class OracleTimeout(EngineError):
    """The oracle did not answer before its deadline; the round can be retried."""


class Oracle(Protocol):
    """Label source: answers class labels for example ids, eventually."""

    def label(self, ids: np.ndarray) -> np.ndarray: ...


class SimulatedOracle:
    """Answers immediately with ground-truth labels; pure and idempotent."""

    def __init__(self, dataset: Dataset) -> None:
        self._dataset = dataset

    def label(self, ids: np.ndarray) -> np.ndarray:
        try:
            return self._dataset.labels_for(ids).copy()
        except KeyError as exc:
            raise UnknownId(f"id {exc.args[0]} not in dataset") from None


def simulated_oracle(dataset: Dataset) -> SimulatedOracle:
    return SimulatedOracle(dataset)


@dataclass(frozen=True)
class RunConfig:
    """Everything that identifies an experiment (execution knobs excluded)."""

    metric: Metric
    per_round_k: int
    seed_size: int
    test_size: int
    hyper: TrainHyper = field(default_factory=TrainHyper)
    max_rounds: int | None = None
    epsilon: float | None = None
    arch: str = "softmax"
    hidden: int = 128
    rng_seed: int = 0
    cold_start: bool = False
    scan: str = "global"
    scan_batch: int | None = None
    pool_size: int | None = None

    def __post_init__(self) -> None:
        if self.per_round_k < 1:
            raise ValueError("per_round_k must be >= 1")
        if self.seed_size < 1:
            raise ValueError("seed_size must be >= 1")
        if self.test_size < 1:
            raise ValueError("test_size must be >= 1")
        if self.max_rounds is None and self.epsilon is None:
            raise ValueError("need max_rounds or epsilon (or both)")
        if self.max_rounds is not None and self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.epsilon is not None and not (0.0 <= self.epsilon <= 1.0):
            raise ValueError("epsilon must lie in [0, 1]")
        if self.arch not in ("softmax", "mlp"):
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be non-negative")
        if self.scan not in ("global", "batched"):
            raise ValueError("scan must be 'global' or 'batched'")
        if self.scan_batch is not None and self.scan_batch < 1:
            raise ValueError("scan_batch must be >= 1")
        if self.pool_size is not None and self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")

    @property
    def run_id(self) -> str:
        return f"{self.metric.value}-seed{self.rng_seed}"


@dataclass
class EngineState:
    """The loop triple (T, P, S) plus the current model and round counter."""

    dataset: Dataset
    labeled_ids: np.ndarray
    labels: np.ndarray
    pool_ids: np.ndarray
    test_ids: np.ndarray
    model: ModelParams
    round: int = 0


@dataclass
class RoundRecord:
    """Metrics for one completed round; support counts describe T after the move."""

    round: int
    labeled_count: int
    train_loss: float
    train_accuracy: float
    test_accuracy: float
    per_class_accuracy: np.ndarray
    per_class_support: np.ndarray
    selected_ids: np.ndarray
    wall_ms: float


@dataclass
class RunTrace:
    run_id: str
    metric: str
    seed: int
    config: RunConfig
    num_classes: int
    class_names: list[str]
    records: list[RoundRecord]
    stop_reason: str


def _rng(seed: int, round_idx: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, round_idx, stream])


def initial_split(
    dataset: Dataset, config: RunConfig, test_ids: np.ndarray | None = None
) -> SplitResult:
    """Seed/pool/test division for a run, including optional pool subsampling.

    When `test_ids` is given (e.g. an official held-out set), the test part
    is pinned to exactly those ids and only seed/pool are drawn from the rest.
    """
    if test_ids is None:
        parts = split(dataset, SplitSpec(config.seed_size, config.test_size, config.rng_seed))
    else:
        test_ids = np.sort(np.asarray(test_ids, dtype=np.int64))
        remaining = dataset.ids[~np.isin(dataset.ids, test_ids, assume_unique=True)]
        carved = split_ids(
            remaining,
            dataset.labels_for(remaining),
            SplitSpec(config.seed_size, 0, config.rng_seed),
        )
        parts = SplitResult(seed_ids=carved.seed_ids, pool_ids=carved.pool_ids, test_ids=test_ids)
    pool = parts.pool_ids
    if config.pool_size is not None and pool.size > config.pool_size:
        rng = _rng(config.rng_seed, 0, _STREAM_SUBSAMPLE)
        pool = np.sort(rng.choice(pool, size=config.pool_size, replace=False))
    return SplitResult(seed_ids=parts.seed_ids, pool_ids=pool, test_ids=parts.test_ids)


def init_state(dataset: Dataset, config: RunConfig, parts: SplitResult | None = None) -> EngineState:
    """Round-zero state: seed set labeled with ground truth, fresh model."""
    if parts is None:
        parts = initial_split(dataset, config)
    model = init_model(
        config.arch, dataset.feature_dim, dataset.num_classes, config.rng_seed, hidden=config.hidden
    )
    return EngineState(
        dataset=dataset,
        labeled_ids=parts.seed_ids.copy(),
        labels=dataset.labels_for(parts.seed_ids),
        pool_ids=parts.pool_ids.copy(),
        test_ids=parts.test_ids.copy(),
        model=model,
        round=0,
    )


def _check_disjoint(state: EngineState) -> None:
    t, p, s = state.labeled_ids, state.pool_ids, state.test_ids
    if np.intersect1d(t, p).size or np.intersect1d(t, s).size or np.intersect1d(p, s).size:
        raise EngineError("T, P, S are no longer disjoint")


def _pool_probs(model: ModelParams, features: np.ndarray, workers: int) -> np.ndarray:
    starts = range(0, features.shape[0], _SCORE_CHUNK)
    chunks = [features[i : i + _SCORE_CHUNK] for i in starts]
    if workers <= 1 or len(chunks) == 1:
        parts = [predict_proba_batch(model, c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: predict_proba_batch(model, c), chunks))
    return np.concatenate(parts, axis=0)


def _select_batched(scores: np.ndarray, k: int, scan_batch: int) -> np.ndarray:
    """Screen per batch (proportional quota), then take the global top-k.

    With scan_batch >= pool size the quota is k and this reduces exactly to
    the global scan.
    """
    n = scores.size
    candidates = []
    for start in range(0, n, scan_batch):
        stop = min(start + scan_batch, n)
        quota = max(1, math.ceil(k * (stop - start) / n))
        kept = select_k(scores[start:stop], quota) + start
        candidates.append(kept)
    cand = np.concatenate(candidates)
    picked = select_k(scores[cand], min(k, cand.size))
    return cand[picked]


def step_round(
    state: EngineState,
    config: RunConfig,
    oracle: Oracle,
    *,
    workers: int = 1,
) -> tuple[EngineState, RoundRecord]:
    """Execute one round; returns the successor state and its record.

    Nothing is committed until the oracle answers: an OracleTimeout leaves
    `state` untouched and the call can simply be repeated (it recomputes the
    identical round, since all randomness derives from the round index).
    """
    if state.pool_ids.size == 0:
        raise EngineError("pool is empty; nothing to select")
    t0 = time.perf_counter()
    dataset = state.dataset
    round_idx = state.round + 1

    base = (
        init_model(config.arch, dataset.feature_dim, dataset.num_classes, config.rng_seed, hidden=config.hidden)
        if config.cold_start
        else state.model
    )
    x_train = dataset.features_for(state.labeled_ids)
    model, train_loss = fit_round(
        base, x_train, state.labels, config.hyper, [config.rng_seed, round_idx, _STREAM_TRAIN]
    )
    train_eval = evaluate(model, x_train, state.labels, dataset.num_classes)
    test_eval = evaluate(
        model,
        dataset.features_for(state.test_ids),
        dataset.labels_for(state.test_ids),
        dataset.num_classes,
    )

    probs = _pool_probs(model, dataset.features_for(state.pool_ids), workers)
    selection_rng = _rng(config.rng_seed, round_idx, _STREAM_SELECT)
    scores = score_pool(config.metric, probs, selection_rng)
    if config.scan == "batched":
        scan_batch = config.scan_batch if config.scan_batch is not None else _SCORE_CHUNK
        selected_local = _select_batched(scores, config.per_round_k, scan_batch)
    else:
        selected_local = select_k(scores, config.per_round_k)
    selected_ids = state.pool_ids[selected_local]

    answers = np.asarray(oracle.label(selected_ids), dtype=np.int64)
    if answers.shape != selected_ids.shape:
        raise EngineError("oracle returned a label count different from the query")
    if answers.size and (answers.min() < 0 or answers.max() >= dataset.num_classes):
        raise EngineError("oracle returned a label outside [0, num_classes)")

    new_state = EngineState(
        dataset=dataset,
        labeled_ids=np.concatenate([state.labeled_ids, selected_ids]),
        labels=np.concatenate([state.labels, answers]),
        pool_ids=state.pool_ids[~np.isin(state.pool_ids, selected_ids, assume_unique=True)],
        test_ids=state.test_ids,
        model=model,
        round=round_idx,
    )
    _check_disjoint(new_state)

    record = RoundRecord(
        round=round_idx,
        labeled_count=int(new_state.labeled_ids.size),
        train_loss=train_loss,
        train_accuracy=train_eval.accuracy,
        test_accuracy=test_eval.accuracy,
        per_class_accuracy=test_eval.per_class_accuracy,
        per_class_support=np.bincount(new_state.labels, minlength=dataset.num_classes),
        selected_ids=selected_ids,
        wall_ms=(time.perf_counter() - t0) * 1000.0,
    )
    return new_state, record


def stop_after(record: RoundRecord, state: EngineState, config: RunConfig) -> str | None:
    """Stop reason if the loop should end after this round, else None."""
    if config.epsilon is not None and (1.0 - record.train_accuracy) <= config.epsilon:
        return STOP_ERROR_BOUND
    if state.pool_ids.size == 0:
        return STOP_POOL_EXHAUSTED
    if config.max_rounds is not None and state.round >= config.max_rounds:
        return STOP_MAX_ROUNDS
    return None


def run(
    config: RunConfig,
    dataset: Dataset,
    oracle: Oracle | None = None,
    *,
    parts: SplitResult | None = None,
    workers: int = 1,
) -> RunTrace:
    """Loop step_round until the error bound, pool exhaustion, or the round cap."""
    if oracle is None:
        oracle = simulated_oracle(dataset)
    state = init_state(dataset, config, parts)
    records: list[RoundRecord] = []
    while True:
        state, record = step_round(state, config, oracle, workers=workers)
        records.append(record)
        reason = stop_after(record, state, config)
        if reason is not None:
            return RunTrace(
                run_id=config.run_id,
                metric=config.metric.value,
                seed=config.rng_seed,
                config=config,
                num_classes=dataset.num_classes,
                class_names=list(dataset.class_names),
                records=records,
                stop_reason=reason,
            )


@dataclass
class MetricCurve:
    """Per-round accuracy aggregated over replicate seeds."""

    metric: str
    rounds: list[int]
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


@dataclass
class CompareResult:
    traces: list[RunTrace]
    curves: dict[str, MetricCurve]


def compare_runs(
    dataset: Dataset,
    metrics: Sequence[Metric],
    seeds: Iterable[int],
    config: RunConfig,
    *,
    oracle: Oracle | None = None,
    test_ids: np.ndarray | None = None,
    workers: int = 1,
) -> CompareResult:
    """Run every (metric x seed) pair on identical per-seed splits.

    Within one replicate seed, all metrics share the same seed set, pool,
    test set, and initial model, so curves differ only through selection.
    """
    metrics = list(metrics)
    seeds = list(seeds)
    if len(metrics) < 2:
        raise ValueError("need at least two metrics to compare")
    if not seeds:
        raise ValueError("need at least one replicate seed")
    if oracle is None:
        oracle = simulated_oracle(dataset)

    traces: list[RunTrace] = []
    for seed in seeds:
        seeded = replace(config, rng_seed=seed)
        parts = initial_split(dataset, seeded, test_ids)
        for metric in metrics:
            cfg = replace(seeded, metric=metric)
            traces.append(run(cfg, dataset, oracle, parts=parts, workers=workers))

    curves: dict[str, MetricCurve] = {}
    for metric in metrics:
        group = [t for t in traces if t.metric == metric.value]
        rounds = [r.round for r in group[0].records]
        for t in group[1:]:
            if [r.round for r in t.records] != rounds:
                raise EngineError(f"replicates of {metric.value} produced misaligned rounds")
        acc = np.array([[r.test_accuracy for r in t.records] for t in group])
        curves[metric.value] = MetricCurve(
            metric=metric.value,
            rounds=rounds,
            mean=acc.mean(axis=0),
            lo=acc.min(axis=0),
            hi=acc.max(axis=0),
        )
    return CompareResult(traces=traces, curves=curves)
