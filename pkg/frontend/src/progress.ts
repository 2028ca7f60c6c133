// Progress view: accuracy-vs-round polyline plus per-class bars for the
// latest completed round, refreshed from /status and /trace polls.

import type { SessionStatus, Trace } from "./api.js";

const CURVE_W = 420;
const CURVE_H = 180;
const PAD = 24;

/** Map (round, accuracy) records onto SVG polyline coordinates. */
export function curvePoints(
  records: { round: number; test_accuracy: number }[],
  width = CURVE_W,
  height = CURVE_H,
  pad = PAD,
): string {
  if (records.length === 0) return "";
  const rounds = records.map((r) => r.round);
  const lo = Math.min(...rounds);
  const hi = Math.max(...rounds);
  const span = hi > lo ? hi - lo : 1;
  return records
    .map((r) => {
      const x = pad + ((r.round - lo) / span) * (width - 2 * pad);
      const y = height - pad - r.test_accuracy * (height - 2 * pad);
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
}

export class ProgressView {
  private connected = true;

  constructor(private readonly container: HTMLElement) {}

  setConnection(ok: boolean): void {
    if (ok !== this.connected) {
      this.connected = ok;
      this.render(this.lastTrace, this.lastStatus);
    }
  }

  private lastTrace: Trace | null = null;
  private lastStatus: SessionStatus | null = null;

  update(trace: Trace | null, status: SessionStatus | null): void {
    this.lastTrace = trace;
    this.lastStatus = status;
    this.render(trace, status);
  }

  render(trace: Trace | null, status: SessionStatus | null): void {
    const doc = this.container.ownerDocument;
    this.container.textContent = "";

    if (!this.connected) {
      const banner = doc.createElement("div");
      banner.className = "reconnect-banner";
      banner.textContent = "connection lost, retrying";
      this.container.appendChild(banner);
    }
    if (status?.stop_reason) {
      const banner = doc.createElement("div");
      banner.className = "stop-banner";
      banner.textContent = `finished: ${status.stop_reason}`;
      this.container.appendChild(banner);
    }

    if (status) {
      const line = doc.createElement("p");
      line.className = "status-line";
      line.textContent =
        `round ${status.round}, labeled ${status.labeled_count}, ` +
        `pool ${status.pool_remaining}, pending ${status.pending_task_count}`;
      this.container.appendChild(line);
    }

    const records = trace?.records ?? [];
    const svg = doc.createElementNS("http://www.w3.org/2000/svg", "svg");
    svg.setAttribute("viewBox", `0 0 ${CURVE_W} ${CURVE_H}`);
    svg.setAttribute("class", "curve");
    const polyline = doc.createElementNS("http://www.w3.org/2000/svg", "polyline");
    polyline.setAttribute("points", curvePoints(records));
    polyline.setAttribute("fill", "none");
    polyline.setAttribute("stroke", "#1f77b4");
    polyline.setAttribute("stroke-width", "2");
    svg.appendChild(polyline);
    this.container.appendChild(svg);

    const latest = records.length ? records[records.length - 1]! : null;
    if (latest && status) {
      const bars = doc.createElement("div");
      bars.className = "class-bars";
      latest.per_class_accuracy.forEach((acc, cls) => {
        const row = doc.createElement("div");
        row.className = "class-bar-row";
        const label = doc.createElement("span");
        label.className = "bar-label";
        label.textContent = status.class_names[cls] ?? String(cls);
        const bar = doc.createElement("div");
        bar.className = "bar";
        bar.style.width = `${Math.round(acc * 100)}%`;
        const value = doc.createElement("span");
        value.className = "bar-value";
        value.textContent = `${(acc * 100).toFixed(1)}% (n=${latest.per_class_support[cls]})`;
        row.append(label, bar, value);
        bars.appendChild(row);
      });
      this.container.appendChild(bars);
    }
  }
}
