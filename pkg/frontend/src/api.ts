// Typed client for the /v1 labeling API. The service is the only backend.

export interface RoundRecord {
  round: number;
  labeled_count: number;
  train_loss: number;
  train_accuracy: number;
  test_accuracy: number;
  per_class_accuracy: number[];
  per_class_support: number[];
  selected_ids: number[];
}

export interface LabelTask {
  task_id: string;
  example_id: number;
  round: number;
  status: "pending" | "answered";
  class_names: string[];
  features: number[];
  grid: number[][] | null;
  png_base64: string | null;
}

export interface SessionStatus {
  session_id: string;
  round: number;
  labeled_count: number;
  pool_remaining: number;
  pending_task_count: number;
  latest_record: RoundRecord | null;
  stop_reason: string | null;
  error: string | null;
  num_classes: number;
  class_names: string[];
  per_round_k: number;
}

export interface Trace {
  run_id: string;
  metric: string;
  stop_reason: string;
  records: RoundRecord[];
  oracle_truth_agreement: number | null;
}

export interface LabelItem {
  task_id: string;
  class: number;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly fetchFn: FetchLike;

  constructor(private readonly base = "", fetchFn?: FetchLike) {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.base}/v1${path}`, init);
    if (!response.ok) {
      let detail = `HTTP ${response.status}`;
      try {
        const body = (await response.json()) as { detail?: unknown };
        if (body && body.detail !== undefined) detail = String(body.detail);
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  createSession(config: Record<string, unknown>): Promise<SessionStatus> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(config),
    });
  }

  queue(sessionId: string): Promise<LabelTask[]> {
    return this.request(`/sessions/${sessionId}/queue`);
  }

  postLabels(sessionId: string, items: LabelItem[]): Promise<{ accepted: number }> {
    return this.request(`/sessions/${sessionId}/labels`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(items),
    });
  }

  status(sessionId: string): Promise<SessionStatus> {
    return this.request(`/sessions/${sessionId}/status`);
  }

  trace(sessionId: string): Promise<Trace> {
    return this.request(`/sessions/${sessionId}/trace`);
  }
}
