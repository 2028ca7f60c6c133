"""Turn run traces into CSV/JSON artifacts, SVG learning curves, and summaries.

Floats are printed with repr's shortest round-trip form, so emitted files are
byte-stable across identical runs and parse back to full precision. The SVG
writer is self-contained (no plotting library): fixed canvas, one polyline
per series, deterministic output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .engine import RoundRecord, RunTrace


class ReportError(Exception):
    pass


class MisalignedTraces(ReportError):
    """Traces being aggregated do not share the same round sequence."""


def _fmt(value: float) -> str:
    return repr(float(value))


def csv_header(num_classes: int) -> list[str]:
    return (
        ["run_id", "metric", "seed", "round", "labeled_count", "train_loss", "test_accuracy"]
        + [f"class_acc_{c}" for c in range(num_classes)]
        + [f"class_support_{c}" for c in range(num_classes)]
        + ["selected_ids"]
    )


def _csv_row(trace: RunTrace, record: RoundRecord) -> list[str]:
    return (
        [
            trace.run_id,
            trace.metric,
            str(trace.seed),
            str(record.round),
            str(record.labeled_count),
            _fmt(record.train_loss),
            _fmt(record.test_accuracy),
        ]
        + [_fmt(a) for a in record.per_class_accuracy]
        + [str(int(s)) for s in record.per_class_support]
        + [";".join(str(int(i)) for i in record.selected_ids)]
    )


def emit_csv(traces: Sequence[RunTrace], path: str | Path) -> int:
    """Write one row per (trace, round), sorted by (metric, seed, round).

    Returns the number of data rows written. All traces must share a class
    count, since the header is class-indexed.
    """
    if not traces:
        raise ValueError("need at least one trace")
    k = traces[0].num_classes
    if any(t.num_classes != k for t in traces):
        raise ValueError("traces mix different class counts")
    ordered = sorted(traces, key=lambda t: (t.metric, t.seed))
    lines = [",".join(csv_header(k))]
    count = 0
    for trace in ordered:
        for record in sorted(trace.records, key=lambda r: r.round):
            lines.append(",".join(_csv_row(trace, record)))
            count += 1
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return count


def read_csv(path: str | Path) -> list[dict]:
    """Parse an emitted CSV back into dicts with full-precision numerics."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        row: dict = {}
        for name, cell in zip(header, cells):
            if name in ("run_id", "metric"):
                row[name] = cell
            elif name == "selected_ids":
                row[name] = [int(v) for v in cell.split(";")] if cell else []
            elif name in ("seed", "round", "labeled_count") or name.startswith("class_support_"):
                row[name] = int(cell)
            else:
                row[name] = float(cell)
        rows.append(row)
    return rows


def trace_to_dict(trace: RunTrace, include_timing: bool = True) -> dict:
    """JSON mirror of a trace with its configuration embedded for provenance."""
    cfg = trace.config
    config = {
        "metric": cfg.metric.value,
        "per_round_k": cfg.per_round_k,
        "seed_size": cfg.seed_size,
        "test_size": cfg.test_size,
        "max_rounds": cfg.max_rounds,
        "epsilon": cfg.epsilon,
        "arch": cfg.arch,
        "hidden": cfg.hidden,
        "rng_seed": cfg.rng_seed,
        "cold_start": cfg.cold_start,
        "scan": cfg.scan,
        "scan_batch": cfg.scan_batch,
        "pool_size": cfg.pool_size,
        "hyper": {
            "learning_rate": cfg.hyper.learning_rate,
            "minibatch_size": cfg.hyper.minibatch_size,
            "epochs_per_round": cfg.hyper.epochs_per_round,
            "l2": cfg.hyper.l2,
        },
    }
    records = []
    for r in trace.records:
        rec = {
            "round": r.round,
            "labeled_count": r.labeled_count,
            "train_loss": r.train_loss,
            "train_accuracy": r.train_accuracy,
            "test_accuracy": r.test_accuracy,
            "per_class_accuracy": [float(a) for a in r.per_class_accuracy],
            "per_class_support": [int(s) for s in r.per_class_support],
            "selected_ids": [int(i) for i in r.selected_ids],
        }
        if include_timing:
            rec["wall_ms"] = r.wall_ms
        records.append(rec)
    return {
        "run_id": trace.run_id,
        "metric": trace.metric,
        "seed": trace.seed,
        "num_classes": trace.num_classes,
        "class_names": trace.class_names,
        "stop_reason": trace.stop_reason,
        "config": config,
        "records": records,
    }


def emit_json(traces: Sequence[RunTrace], path: str | Path, include_timing: bool = True) -> None:
    payload = [trace_to_dict(t, include_timing=include_timing) for t in traces]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# SVG learning curves
# ---------------------------------------------------------------------------

_PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
]

_WIDTH, _HEIGHT = 840, 520
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 170, 40, 55


@dataclass
class CurveSeries:
    """One labeled line: (round, value) points plus an optional min/max band."""

    label: str
    points: list[tuple[float, float]]
    band: list[tuple[float, float, float]] | None = None

    def __post_init__(self) -> None:
        if not self.points:
            raise ValueError("series needs at least one point")
        xs = [p[0] for p in self.points]
        if any(b >= a for a, b in zip(xs[1:], xs)):
            raise ValueError("rounds must be strictly increasing")
        if not all(np.isfinite(v) for _, v in self.points):
            raise ValueError("series values must be finite")
        if self.band is not None:
            if len(self.band) != len(self.points):
                raise ValueError("band must align with points")
            for (_, value), (_, lo, hi) in zip(self.points, self.band):
                if not (lo <= value <= hi):
                    raise ValueError("band must contain the mean point-wise")


@dataclass
class AxesConfig:
    x_label: str = "round"
    y_label: str = "test accuracy"
    title: str = ""
    y_min: float | None = None
    y_max: float | None = None


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def emit_curves_svg(series: Sequence[CurveSeries], axes: AxesConfig, path: str | Path) -> None:
    """Write a standalone SVG 1.1 chart: one polyline and legend entry per series."""
    if not series:
        raise ValueError("need at least one series")

    xs = [x for s in series for x, _ in s.points]
    ys = [y for s in series for _, y in s.points]
    for s in series:
        if s.band:
            ys.extend(v for _, lo, hi in s.band for v in (lo, hi))
    x_lo, x_hi = min(xs), max(xs)
    y_lo = axes.y_min if axes.y_min is not None else min(ys)
    y_hi = axes.y_max if axes.y_max is not None else max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def px(x: float) -> float:
        return _MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return _MARGIN_T + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_WIDTH}" height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
    ]
    if axes.title:
        parts.append(
            f'<text x="{_WIDTH / 2:.1f}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="16">{_esc(axes.title)}</text>'
        )

    # axes frame and ticks
    parts.append(
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333" stroke-width="1"/>'
    )
    for tx in _ticks(x_lo, x_hi):
        x = px(tx)
        parts.append(
            f'<line x1="{x:.2f}" y1="{_MARGIN_T + plot_h}" x2="{x:.2f}" '
            f'y2="{_MARGIN_T + plot_h + 5}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{_MARGIN_T + plot_h + 20}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{tx:g}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        y = py(ty)
        parts.append(
            f'<line x1="{_MARGIN_L - 5}" y1="{y:.2f}" x2="{_MARGIN_L}" y2="{y:.2f}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{_MARGIN_L - 9}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="12">{ty:.3g}</text>'
        )
    parts.append(
        f'<text x="{_MARGIN_L + plot_w / 2:.1f}" y="{_HEIGHT - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{_esc(axes.x_label)}</text>'
    )
    parts.append(
        f'<text x="18" y="{_MARGIN_T + plot_h / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14" '
        f'transform="rotate(-90 18 {_MARGIN_T + plot_h / 2:.1f})">{_esc(axes.y_label)}</text>'
    )

    for i, s in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        if s.band:
            upper = [f"{px(x):.2f},{py(hi):.2f}" for x, _, hi in s.band]
            lower = [f"{px(x):.2f},{py(lo):.2f}" for x, lo, _ in reversed(s.band)]
            parts.append(
                f'<polygon points="{" ".join(upper + lower)}" fill="{color}" '
                f'fill-opacity="0.15" stroke="none"/>'
            )
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in s.points)
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"/>'
        )
        # legend entry
        ly = _MARGIN_T + 14 + i * 20
        lx = _WIDTH - _MARGIN_R + 14
        parts.append(
            f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{lx + 30}" y="{ly + 4}" font-family="sans-serif" '
            f'font-size="13">{_esc(s.label)}</text>'
        )

    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

@dataclass
class MetricSummary:
    metric: str
    replicates: int
    final_accuracy: float
    rounds_to_threshold: int | None
    area: float


def mean_curve(traces: Sequence[RunTrace]) -> tuple[list[int], np.ndarray]:
    """Rounds and mean test accuracy across traces; they must align."""
    rounds = [r.round for r in traces[0].records]
    for t in traces[1:]:
        if [r.round for r in t.records] != rounds:
            raise MisalignedTraces(
                f"trace {t.run_id} rounds differ from {traces[0].run_id}"
            )
    acc = np.array([[r.test_accuracy for r in t.records] for t in traces])
    return rounds, acc.mean(axis=0)


def summarize(traces: Sequence[RunTrace], threshold: float = 0.9) -> list[MetricSummary]:
    """Per-metric mean-curve summary: final accuracy, rounds-to-threshold, area.

    Area is the trapezoidal integral of the mean accuracy over round numbers,
    a threshold-free scalar for ranking metrics. Order of the input traces
    does not matter; output is sorted by metric name.
    """
    if not traces:
        raise ValueError("need at least one trace")
    by_metric: dict[str, list[RunTrace]] = {}
    for t in traces:
        by_metric.setdefault(t.metric, []).append(t)

    summaries = []
    for metric in sorted(by_metric):
        group = sorted(by_metric[metric], key=lambda t: t.seed)
        rounds, mean = mean_curve(group)
        hits = [r for r, m in zip(rounds, mean) if m >= threshold]
        area = float(np.trapezoid(mean, x=np.asarray(rounds, dtype=np.float64)))
        summaries.append(
            MetricSummary(
                metric=metric,
                replicates=len(group),
                final_accuracy=float(mean[-1]),
                rounds_to_threshold=hits[0] if hits else None,
                area=area,
            )
        )
    return summaries


def format_summary_table(summaries: Sequence[MetricSummary], threshold: float) -> str:
    headers = ["metric", "runs", "final_acc", f"rounds_to_{threshold:g}", "area"]
    rows = [
        [
            s.metric,
            str(s.replicates),
            f"{s.final_accuracy:.4f}",
            "never" if s.rounds_to_threshold is None else str(s.rounds_to_threshold),
            f"{s.area:.4f}",
        ]
        for s in summaries
    ]
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    out = [line, "  ".join("-" * w for w in widths)]
    for r in rows:
        out.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(out)


def summary_to_json(summaries: Sequence[MetricSummary], threshold: float) -> str:
    return json.dumps(
        {
            "threshold": threshold,
            "metrics": [
                {
                    "metric": s.metric,
                    "replicates": s.replicates,
                    "final_accuracy": s.final_accuracy,
                    "rounds_to_threshold": s.rounds_to_threshold,
                    "area": s.area,
                }
                for s in summaries
            ],
        },
        indent=2,
    )
