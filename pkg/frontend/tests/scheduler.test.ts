import { describe, expect, it } from "vitest";

import { RequestScheduler } from "../src/scheduler.js";
import { deferred } from "./mock.js";

describe("request discipline", () => {
  it("keeps at most one request of a kind in flight", async () => {
    const scheduler = new RequestScheduler();
    const gate = deferred<number>();
    let runs = 0;
    const applied: number[] = [];
    for (let i = 0; i < 5; i++) {
      scheduler.schedule("sample", {
        run: () => {
          runs++;
          return gate.promise;
        },
        apply: (v) => applied.push(v),
      });
    }
    expect(runs).toBe(1);
    expect(scheduler.busy("sample")).toBe(true);
    gate.resolve(42);
    await scheduler.idle();
    // The first response was superseded; only the coalesced latest ran
    // and applied.
    expect(runs).toBe(2);
    expect(applied).toEqual([42]);
    expect(scheduler.started).toBe(2);
  });

  it("different kinds run concurrently", () => {
    const scheduler = new RequestScheduler();
    const hang = deferred<void>();
    let sampleRuns = 0;
    let boxRuns = 0;
    scheduler.schedule("sample", {
      run: () => {
        sampleRuns++;
        return hang.promise;
      },
      apply: () => {},
    });
    scheduler.schedule("kdboxes", {
      run: () => {
        boxRuns++;
        return hang.promise;
      },
      apply: () => {},
    });
    expect(sampleRuns).toBe(1);
    expect(boxRuns).toBe(1);
  });

  it("drops a superseded result instead of applying it", async () => {
    const scheduler = new RequestScheduler();
    const slow = deferred<string>();
    const applied: string[] = [];
    scheduler.schedule("sample", {
      run: () => slow.promise,
      apply: (v) => applied.push(v),
    });
    scheduler.schedule("sample", {
      run: () => Promise.resolve("new"),
      apply: (v) => applied.push(v),
    });
    slow.resolve("old");
    await scheduler.idle();
    expect(applied).toEqual(["new"]);
  });

  it("routes errors to the latest task only", async () => {
    const scheduler = new RequestScheduler();
    const slow = deferred<string>();
    const failures: string[] = [];
    scheduler.schedule("sample", {
      run: () => slow.promise,
      apply: () => {},
      fail: () => failures.push("old"),
    });
    scheduler.schedule("sample", {
      run: () => Promise.reject(new Error("boom")),
      apply: () => {},
      fail: () => failures.push("new"),
    });
    slow.reject(new Error("stale failure"));
    await scheduler.idle();
    expect(failures).toEqual(["new"]);
  });

  it("idle resolves immediately when nothing is in flight", async () => {
    const scheduler = new RequestScheduler();
    await scheduler.idle();
    expect(scheduler.started).toBe(0);
  });
});
