/**
 * Per-endpoint request discipline.
 *
 * At most one request per endpoint kind is in flight at any time.  A
 * new request issued while one is pending replaces any queued follower
 * (latest wins) and marks the in-flight one superseded, so its response
 * is dropped on arrival rather than rendered.  Nothing here ever blocks
 * a caller: results and errors are handed to callbacks.
 */

import { EndpointKind } from "./cache.js";

export interface ScheduledTask<T> {
  run: () => Promise<T>;
  /** Called only when this task is still the latest of its kind. */
  apply: (result: T) => void;
  /** Called only when this task is still the latest of its kind. */
  fail?: (error: unknown) => void;
}

interface AnyTask extends ScheduledTask<unknown> {
  id: number;
}

export class RequestScheduler {
  private nextId = 1;
  private latest = new Map<EndpointKind, number>();
  private inflight = new Map<EndpointKind, number>();
  private pending = new Map<EndpointKind, AnyTask>();
  private settled: Promise<void> = Promise.resolve();
  private settleNotify: (() => void) | null = null;

  /** Number of requests started since construction. */
  started = 0;

  /** Queue a request; it starts now unless one of this kind is in flight. */
  schedule<T>(kind: EndpointKind, task: ScheduledTask<T>): void {
    const entry: AnyTask = {
      id: this.nextId++,
      run: task.run,
      apply: task.apply as (result: unknown) => void,
      fail: task.fail,
    };
    this.latest.set(kind, entry.id);
    if (this.inflight.has(kind)) {
      this.pending.set(kind, entry);
      return;
    }
    this.launch(kind, entry);
  }

  /** Whether any request of this kind is currently in flight. */
  busy(kind: EndpointKind): boolean {
    return this.inflight.has(kind);
  }

  /** Resolves once no request is in flight (for tests). */
  idle(): Promise<void> {
    if (this.inflight.size === 0) return Promise.resolve();
    if (this.settleNotify === null) {
      this.settled = new Promise((resolve) => {
        this.settleNotify = resolve;
      });
    }
    return this.settled;
  }

  private launch(kind: EndpointKind, entry: AnyTask): void {
    this.inflight.set(kind, entry.id);
    this.started++;
    entry
      .run()
      .then(
        (result) => {
          if (this.latest.get(kind) === entry.id) entry.apply(result);
        },
        (error) => {
          if (this.latest.get(kind) === entry.id) entry.fail?.(error);
        },
      )
      .finally(() => {
        this.inflight.delete(kind);
        const follower = this.pending.get(kind);
        if (follower !== undefined) {
          this.pending.delete(kind);
          this.launch(kind, follower);
        } else if (this.inflight.size === 0 && this.settleNotify !== null) {
          const notify = this.settleNotify;
          this.settleNotify = null;
          notify();
        }
      });
  }
}
