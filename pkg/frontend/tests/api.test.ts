import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

function recordingFetch(status: number, body: unknown) {
  const calls: { url: string; init?: RequestInit }[] = [];
  const fetchFn = async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    return new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
  };
  return { calls, fetchFn };
}

describe("ApiClient", () => {
  it("builds versioned URLs and parses JSON", async () => {
    const { calls, fetchFn } = recordingFetch(200, [{ task_id: "t" }]);
    const client = new ApiClient("http://host:9", fetchFn);
    const queue = await client.queue("s1");
    expect(calls[0]?.url).toBe("http://host:9/v1/sessions/s1/queue");
    expect(queue).toEqual([{ task_id: "t" }]);
  });

  it("posts labels as a bare JSON list", async () => {
    const { calls, fetchFn } = recordingFetch(200, { accepted: 2 });
    const client = new ApiClient("", fetchFn);
    const result = await client.postLabels("s1", [
      { task_id: "a", class: 1 },
      { task_id: "b", class: 0 },
    ]);
    expect(result.accepted).toBe(2);
    expect(calls[0]?.init?.method).toBe("POST");
    expect(JSON.parse(String(calls[0]?.init?.body))).toHaveLength(2);
  });

  it("maps error responses to ApiError with the detail string", async () => {
    const { fetchFn } = recordingFetch(409, { detail: "task t already answered" });
    const client = new ApiClient("", fetchFn);
    const error = await client.postLabels("s1", [{ task_id: "t", class: 0 }]).catch((e) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect(error.status).toBe(409);
    expect(error.message).toContain("already answered");
  });

  it("creates sessions with a JSON config body", async () => {
    const { calls, fetchFn } = recordingFetch(201, { session_id: "s1" });
    const client = new ApiClient("", fetchFn);
    await client.createSession({ metric: "lcu", k: 5 });
    expect(calls[0]?.url).toBe("/v1/sessions");
    expect(JSON.parse(String(calls[0]?.init?.body))).toEqual({ metric: "lcu", k: 5 });
  });
});
