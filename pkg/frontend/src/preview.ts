/**
 * Debounced, latest-wins preview fetching.
 *
 * Pointer events request previews far faster than the server should be hit;
 * requests are debounced (150 ms after the last call) and responses are
 * tagged with a monotonically increasing sequence number so a stale response
 * can never overwrite a newer one.
 */

export const PREVIEW_DEBOUNCE_MS = 150;

export interface Scheduler {
  set(fn: () => void, ms: number): unknown;
  clear(handle: unknown): void;
}

const realScheduler: Scheduler = {
  set: (fn, ms) => setTimeout(fn, ms),
  clear: (handle) => clearTimeout(handle as ReturnType<typeof setTimeout>),
};

export class PreviewController<T> {
  private seq = 0;
  private applied = 0;
  private pending: unknown = null;

  constructor(
    private readonly fetcher: () => Promise<T>,
    private readonly apply: (result: T) => void,
    private readonly onError: (err: unknown) => void = () => {},
    private readonly scheduler: Scheduler = realScheduler,
    private readonly debounceMs: number = PREVIEW_DEBOUNCE_MS,
  ) {}

  /** Schedule a refresh; collapses bursts into one request. */
  request(): void {
    if (this.pending !== null) this.scheduler.clear(this.pending);
    this.pending = this.scheduler.set(() => {
      this.pending = null;
      void this.fire();
    }, this.debounceMs);
  }

  /** Issue a request immediately (still latest-wins). */
  async fire(): Promise<void> {
    const ticket = ++this.seq;
    try {
      const result = await this.fetcher();
      if (ticket > this.applied) {
        this.applied = ticket;
        this.apply(result);
      }
      // else: a newer response already landed; drop this one
    } catch (err) {
      if (ticket > this.applied) this.onError(err);
    }
  }
}
