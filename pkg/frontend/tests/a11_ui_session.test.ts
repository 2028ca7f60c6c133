// Acceptance A11: a scripted "human" labels two full rounds through the
// queue view; the progress view gains two curve points; refreshing the page
// mid-round loses no server-side answers.

import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { App } from "../src/main.js";
import { FakeServer } from "./fake_server.js";

function mountApp(server: FakeServer): App {
  document.body.innerHTML =
    '<section id="queue"></section><section id="progress"></section>';
  const client = new ApiClient("", server.fetch);
  return new App(client, document.getElementById("queue")!, document.getElementById("progress")!);
}

async function labelVisibleRound(app: App): Promise<void> {
  const queueEl = document.getElementById("queue")!;
  const count = queueEl.querySelectorAll("figure.task").length;
  for (let i = 0; i < count; i++) app.handleKey(String(i % 2));
  app.handleKey("Enter"); // submits asynchronously
  await new Promise((resolve) => setTimeout(resolve, 0));
  await new Promise((resolve) => setTimeout(resolve, 0));
}

describe("A11: two labeled rounds through the UI with a mid-round refresh", () => {
  let server: FakeServer;

  beforeEach(() => {
    server = new FakeServer({ k: 5, maxRounds: 4 });
  });

  it("labels two rounds, gains two curve points, survives refresh", async () => {
    let app = mountApp(server);
    await app.attach("s1");
    app.stop(); // drive refreshes manually instead of the 1s poll

    const queueEl = () => document.getElementById("queue")!;
    const progressEl = () => document.getElementById("progress")!;
    expect(queueEl().querySelectorAll("figure.task")).toHaveLength(5);

    // round 1: label everything and submit
    await labelVisibleRound(app);
    await app.refresh();
    expect(server.records).toHaveLength(1);
    let points = progressEl().querySelector("polyline")!.getAttribute("points")!;
    expect(points.split(" ")).toHaveLength(1);

    // round 2 queue appeared; stage two labels but do NOT submit
    expect(queueEl().querySelectorAll("figure.task")).toHaveLength(5);
    app.handleKey("0");
    app.handleKey("1");
    const answeredBefore = server.answeredCount();

    // refresh: tear the page down and remount from the server
    app.stop();
    app = mountApp(server);
    await app.attach("s1");
    app.stop();

    // no server-side answers were lost, and the full round-2 queue is back
    expect(server.answeredCount()).toBe(answeredBefore);
    expect(server.records).toHaveLength(1);
    expect(queueEl().querySelectorAll("figure.task")).toHaveLength(5);

    // round 2 again from scratch: label everything and submit
    await labelVisibleRound(app);
    await app.refresh();
    expect(server.records).toHaveLength(2);
    points = progressEl().querySelector("polyline")!.getAttribute("points")!;
    expect(points.split(" ")).toHaveLength(2);

    // the trace keeps strictly increasing rounds
    expect(server.records.map((r) => r.round)).toEqual([1, 2]);
    app.stop();
  });

  it("server rejects conflicting relabels and the UI surfaces them inline", async () => {
    const app = mountApp(server);
    await app.attach("s1");
    app.stop();

    // answer one task out-of-band with a different class than the UI stages
    const firstTask = [...server.tasks.keys()][0]!;
    await server.fetch("/v1/sessions/s1/labels", {
      method: "POST",
      body: JSON.stringify([{ task_id: firstTask, class: 1 }]),
    });

    await labelVisibleRound(app); // stages class 0 for the first task -> 409
    const banner = document.getElementById("queue")!.querySelector(".error-banner");
    expect(banner?.textContent).toContain("409");
    // staged labels were not thrown away
    expect(app["queueView"].round.answered).toBe(5);
  });
});
