// Bootstrap: create or attach to a session, then poll status/trace once a
// second. The server is the source of truth; the queue view only reloads
// its tasks when the round actually changes, so staged labels survive polls.

import { ApiClient, ApiError } from "./api.js";
import { ProgressView } from "./progress.js";
import { QueueView } from "./queue.js";

const POLL_MS = 1000;

export class App {
  private readonly queueView: QueueView;
  private readonly progressView: ProgressView;
  private sessionId: string | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly client: ApiClient,
    queueEl: HTMLElement,
    progressEl: HTMLElement,
    private readonly onHashChange: (sessionId: string) => void = () => {},
  ) {
    this.queueView = new QueueView(queueEl, (items) => void this.submit(items));
    this.progressView = new ProgressView(progressEl);
  }

  async createSession(config: Record<string, unknown>): Promise<string> {
    const status = await this.client.createSession(config);
    await this.attach(status.session_id);
    this.onHashChange(status.session_id);
    return status.session_id;
  }

  async attach(sessionId: string): Promise<void> {
    this.sessionId = sessionId;
    await this.refresh();
    if (this.timer === null) {
      this.timer = setInterval(() => void this.refresh(), POLL_MS);
    }
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  handleKey(key: string): void {
    this.queueView.handleKey(key);
  }

  private async submit(items: { task_id: string; class: number }[]): Promise<void> {
    if (!this.sessionId) return;
    try {
      await this.client.postLabels(this.sessionId, items);
      await this.refresh(true);
    } catch (error) {
      if (error instanceof ApiError) {
        // conflicts and validation errors surface inline; staged labels stay
        this.queueView.showError(`${error.status}: ${error.message}`);
      } else {
        this.progressView.setConnection(false);
      }
    }
  }

  async refresh(forceQueue = false): Promise<void> {
    if (!this.sessionId) return;
    try {
      const status = await this.client.status(this.sessionId);
      const trace = await this.client.trace(this.sessionId);
      this.progressView.setConnection(true);
      this.progressView.update(trace, status);
      const loadedRound = this.queueView.round.round;
      if (forceQueue || status.stop_reason !== null || loadedRound !== status.round) {
        const tasks = await this.client.queue(this.sessionId);
        if (forceQueue || tasks.length || status.stop_reason !== null) {
          this.queueView.setTasks(tasks);
        }
      }
    } catch {
      this.progressView.setConnection(false);
    }
  }
}

export function bootstrap(doc: Document): App {
  const client = new ApiClient("");
  const queueEl = doc.getElementById("queue")!;
  const progressEl = doc.getElementById("progress")!;
  const app = new App(client, queueEl, progressEl, (sid) => {
    doc.defaultView!.location.hash = sid;
  });

  doc.addEventListener("keydown", (event) => {
    const target = event.target as HTMLElement | null;
    if (target && (target.tagName === "INPUT" || target.tagName === "SELECT")) return;
    app.handleKey(event.key);
  });

  const form = doc.getElementById("create-form") as HTMLFormElement | null;
  form?.addEventListener("submit", (event) => {
    event.preventDefault();
    const metric = (doc.getElementById("metric") as HTMLSelectElement).value;
    const k = Number((doc.getElementById("k") as HTMLInputElement).value);
    const rounds = Number((doc.getElementById("rounds") as HTMLInputElement).value);
    void app
      .createSession({ metric, k, rounds })
      .catch((error) => alert(`could not create session: ${error}`));
  });

  const existing = doc.defaultView!.location.hash.replace("#", "");
  if (existing) void app.attach(existing);
  return app;
}

declare global {
  interface Window {
    querypoolApp?: App;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined" && document.getElementById("queue")) {
  window.querypoolApp = bootstrap(document);
}
