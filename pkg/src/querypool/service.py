"""HTTP facade for human-in-the-loop labeling sessions.

A session owns one engine run driven by a queued oracle: each round the
engine suspends at the labeling step, the selected examples appear under
/v1/sessions/{id}/queue, and once every task is answered the round commits
and the next queue is published. Posting the final answer blocks until that
next queue is up (or the run stopped), so clients never observe a stale
empty queue.

All session mutation happens under a per-session lock; reads serve a
consistent committed snapshot.
"""

from __future__ import annotations

import base64
import io
import itertools
import json
import math
import threading
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles

from .data import Dataset
from .engine import (
    OracleTimeout,
    RunConfig,
    RunTrace,
    init_state,
    initial_split,
    step_round,
    stop_after,
)
from .model import TrainHyper
from .report import trace_to_dict
from .uncertainty import Metric

_RESUME_WAIT_S = 120.0
_READY_WAIT_S = 120.0


def _png_base64(grid: np.ndarray) -> str:
    from PIL import Image

    image = Image.fromarray(grid.astype(np.uint8), mode="L")
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _task_payload(dataset: Dataset, example_id: int) -> dict[str, Any]:
    """Both image encodings when features form a square grid, else raw features."""
    features = dataset.features_for(np.array([example_id]))[0]
    side = math.isqrt(features.size)
    payload: dict[str, Any] = {"features": [float(v) for v in features]}
    if side * side == features.size and side >= 2:
        grid = np.rint(features.reshape(side, side) * 255.0).astype(np.uint8)
        payload["grid"] = grid.tolist()
        payload["png_base64"] = _png_base64(grid)
    else:
        payload["grid"] = None
        payload["png_base64"] = None
    return payload


class _QueuedOracle:
    """Publishes queried ids as tasks and blocks until all are answered."""

    def __init__(self, session: "LabelSession", deadline_s: float | None = None) -> None:
        self._session = session
        self._deadline_s = deadline_s

    def label(self, ids: np.ndarray) -> np.ndarray:
        session = self._session
        with session.cond:
            task_ids = session._publish(ids)
            waited = 0.0
            while not session._all_answered(task_ids):
                session.cond.wait(timeout=0.5)
                waited += 0.5
                if self._deadline_s is not None and waited >= self._deadline_s:
                    session._withdraw(task_ids)
                    raise OracleTimeout(f"queue unanswered after {self._deadline_s}s")
            return np.array(
                [session.tasks[t]["answer"] for t in task_ids], dtype=np.int64
            )


class LabelSession:
    def __init__(
        self,
        session_id: str,
        dataset: Dataset,
        config: RunConfig,
        test_ids: np.ndarray | None,
        snapshot_dir: Path | None,
    ) -> None:
        self.id = session_id
        self.dataset = dataset
        self.config = config
        self.lock = threading.Lock()
        self.cond = threading.Condition(self.lock)
        self.state = init_state(dataset, config, initial_split(dataset, config, test_ids))
        self.records: list = []
        self.tasks: dict[str, dict[str, Any]] = {}
        self.queue_order: list[str] = []
        self.queue_generation = 0
        self.stop_reason: str | None = None
        self.error: str | None = None
        self.snapshot_dir = snapshot_dir
        self._thread = threading.Thread(target=self._loop, name=f"session-{session_id}", daemon=True)

    # -- engine side ---------------------------------------------------

    def start(self) -> None:
        self._thread.start()
        with self.cond:
            self.cond.wait_for(
                lambda: self.queue_generation > 0 or self.stop_reason or self.error,
                timeout=_READY_WAIT_S,
            )
        if self.error:
            raise RuntimeError(self.error)

    def _loop(self) -> None:
        oracle = _QueuedOracle(self)
        try:
            while True:
                state, record = step_round(self.state, self.config, oracle)
                with self.cond:
                    self.state = state
                    self.records.append(record)
                    reason = stop_after(record, state, self.config)
                    self.stop_reason = reason
                    self._snapshot()
                    self.cond.notify_all()
                if reason is not None:
                    return
        except Exception as exc:  # surface engine failures through /status
            with self.cond:
                self.error = f"{type(exc).__name__}: {exc}"
                self.cond.notify_all()

    def _publish(self, ids: np.ndarray) -> list[str]:
        round_idx = self.state.round + 1
        task_ids = []
        for example_id in ids:
            tid = f"r{round_idx}-e{int(example_id)}"
            self.tasks[tid] = {
                "task_id": tid,
                "example_id": int(example_id),
                "round": round_idx,
                "status": "pending",
                "answer": None,
                "class_names": list(self.dataset.class_names),
                **_task_payload(self.dataset, int(example_id)),
            }
            task_ids.append(tid)
        self.queue_order = task_ids
        self.queue_generation += 1
        self.cond.notify_all()
        return task_ids

    def _withdraw(self, task_ids: list[str]) -> None:
        for tid in task_ids:
            self.tasks.pop(tid, None)
        self.queue_order = []

    def _all_answered(self, task_ids: list[str]) -> bool:
        return all(self.tasks[t]["status"] == "answered" for t in task_ids)

    def _snapshot(self) -> None:
        if self.snapshot_dir is None:
            return
        self.snapshot_dir.mkdir(parents=True, exist_ok=True)
        path = self.snapshot_dir / f"{self.id}.json"
        path.write_text(json.dumps(self._trace_dict_locked(), indent=2) + "\n")

    # -- HTTP side -----------------------------------------------------

    def pending_tasks(self) -> list[dict[str, Any]]:
        with self.lock:
            tasks = [
                self.tasks[t] for t in self.queue_order if self.tasks[t]["status"] == "pending"
            ]
            tasks = sorted(tasks, key=lambda t: t["example_id"])
            return [
                {k: v for k, v in t.items() if k != "answer"}
                for t in tasks
            ]

    def apply_labels(self, items: list[dict[str, Any]]) -> int:
        with self.cond:
            validated: list[tuple[str, int]] = []
            for item in items:
                tid = item.get("task_id")
                if tid is None or tid not in self.tasks:
                    raise HTTPException(404, detail=f"unknown task {tid!r}")
                try:
                    cls = int(item["class"])
                except (KeyError, TypeError, ValueError):
                    raise HTTPException(422, detail="each item needs an integer 'class'")
                if not (0 <= cls < self.dataset.num_classes):
                    raise HTTPException(
                        422, detail=f"class {cls} outside [0, {self.dataset.num_classes})"
                    )
                task = self.tasks[tid]
                if task["status"] == "answered" and task["answer"] != cls:
                    raise HTTPException(
                        409, detail=f"task {tid} already answered with {task['answer']}"
                    )
                validated.append((tid, cls))

            accepted = 0
            for tid, cls in validated:
                task = self.tasks[tid]
                if task["status"] == "pending":
                    task["status"] = "answered"
                    task["answer"] = cls
                    accepted += 1
            if accepted:
                self.cond.notify_all()

            # if that completed the round, hold the request until the engine
            # has committed and either republished or stopped
            if self.queue_order and self._all_answered(self.queue_order):
                generation = self.queue_generation
                self.cond.wait_for(
                    lambda: self.queue_generation > generation
                    or self.stop_reason is not None
                    or self.error is not None,
                    timeout=_RESUME_WAIT_S,
                )
            return accepted

    def status(self) -> dict[str, Any]:
        with self.lock:
            pending = sum(
                1 for t in self.queue_order if self.tasks[t]["status"] == "pending"
            )
            running = self.stop_reason is None and self.error is None
            latest = None
            if self.records:
                latest = _record_dict(self.records[-1])
            return {
                "session_id": self.id,
                "round": self.state.round + (1 if running else 0),
                "labeled_count": int(self.state.labeled_ids.size),
                "pool_remaining": int(self.state.pool_ids.size),
                "pending_task_count": pending,
                "latest_record": latest,
                "stop_reason": self.stop_reason,
                "error": self.error,
                "num_classes": self.dataset.num_classes,
                "class_names": list(self.dataset.class_names),
                "per_round_k": self.config.per_round_k,
            }

    def trace(self) -> dict[str, Any]:
        with self.lock:
            return self._trace_dict_locked()

    def _trace_dict_locked(self) -> dict[str, Any]:
        trace = RunTrace(
            run_id=f"session-{self.id}",
            metric=self.config.metric.value,
            seed=self.config.rng_seed,
            config=self.config,
            num_classes=self.dataset.num_classes,
            class_names=list(self.dataset.class_names),
            records=list(self.records),
            stop_reason=self.stop_reason or "in_progress",
        )
        payload = trace_to_dict(trace)
        answered = [t for t in self.tasks.values() if t["status"] == "answered"]
        if answered:
            truth = self.dataset.labels_for(np.array([t["example_id"] for t in answered]))
            agreement = float(np.mean([t["answer"] == y for t, y in zip(answered, truth)]))
        else:
            agreement = None
        payload["oracle_truth_agreement"] = agreement
        return payload


def _record_dict(record) -> dict[str, Any]:
    return {
        "round": record.round,
        "labeled_count": record.labeled_count,
        "train_loss": record.train_loss,
        "train_accuracy": record.train_accuracy,
        "test_accuracy": record.test_accuracy,
        "per_class_accuracy": [float(a) for a in record.per_class_accuracy],
        "per_class_support": [int(s) for s in record.per_class_support],
        "selected_ids": [int(i) for i in record.selected_ids],
    }


def _config_from_body(body: dict, dataset: Dataset, test_ids: np.ndarray | None) -> RunConfig:
    if not isinstance(body, dict):
        raise HTTPException(400, detail="config must be a JSON object")
    try:
        metric = Metric.from_string(str(body.get("metric", "entropy")))
        k = int(body.get("k", 5))
        seed_size = int(body.get("seed_size", max(2, k)))
        max_rounds = body.get("max_rounds", body.get("rounds"))
        epsilon = body.get("epsilon")
        if max_rounds is None and epsilon is None:
            max_rounds = 10
        if test_ids is not None:
            test_size = int(test_ids.size)
        else:
            test_size = int(body.get("test_size", max(1, min(1000, len(dataset) // 5))))
        hyper = TrainHyper(
            learning_rate=float(body.get("lr", 0.2)),
            minibatch_size=int(body.get("minibatch", 32)),
            epochs_per_round=int(body.get("epochs_per_round", 5)),
            l2=float(body.get("l2", 0.0)),
        )
        return RunConfig(
            metric=metric,
            per_round_k=k,
            seed_size=seed_size,
            test_size=test_size,
            max_rounds=int(max_rounds) if max_rounds is not None else None,
            epsilon=float(epsilon) if epsilon is not None else None,
            hyper=hyper,
            arch=str(body.get("arch", "softmax")),
            hidden=int(body.get("hidden", 128)),
            rng_seed=int(body.get("rng_seed", body.get("seed", 0))),
            cold_start=bool(body.get("cold_start", False)),
            pool_size=int(body["pool_size"]) if body.get("pool_size") is not None else None,
        )
    except (TypeError, ValueError) as exc:
        raise HTTPException(400, detail=str(exc))


def create_app(
    dataset: Dataset,
    *,
    test_ids: np.ndarray | None = None,
    capacity: int = 16,
    snapshot_dir: Path | None = None,
    ui_dir: Path | None = None,
) -> FastAPI:
    """Wire the /v1 labeling API around one server-side dataset."""
    app = FastAPI(title="querypool labeling service")
    sessions: dict[str, LabelSession] = {}
    ids = itertools.count(1)

    def get_session(session_id: str) -> LabelSession:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(404, detail=f"unknown session {session_id!r}")
        return session

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: dict) -> dict:
        if len(sessions) >= capacity:
            raise HTTPException(409, detail=f"capacity of {capacity} sessions exceeded")
        config = _config_from_body(body, dataset, test_ids)
        session = LabelSession(f"s{next(ids)}", dataset, config, test_ids, snapshot_dir)
        try:
            session.start()
        except RuntimeError as exc:
            raise HTTPException(400, detail=str(exc))
        sessions[session.id] = session
        return {"session_id": session.id, **session.status()}

    @app.get("/v1/sessions/{session_id}/queue")
    def get_queue(session_id: str) -> list[dict]:
        return get_session(session_id).pending_tasks()

    @app.post("/v1/sessions/{session_id}/labels")
    def post_labels(session_id: str, body: list[dict]) -> dict:
        session = get_session(session_id)
        if not isinstance(body, list):
            raise HTTPException(422, detail="body must be a list of {task_id, class} items")
        accepted = session.apply_labels(body)
        return {"accepted": accepted}

    @app.get("/v1/sessions/{session_id}/status")
    def get_status(session_id: str) -> dict:
        return get_session(session_id).status()

    @app.get("/v1/sessions/{session_id}/trace")
    def get_trace(session_id: str) -> dict:
        return get_session(session_id).trace()

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
