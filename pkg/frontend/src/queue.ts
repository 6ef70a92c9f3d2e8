import type { QueueItem, Verdict } from "./types.js";

export interface QueueState {
  item: QueueItem | null;
  /** 1-based position of the current item; 0 when the queue is empty. */
  position: number;
  /** Number of items loaded for this session. */
  total: number;
  remaining: number;
  decided: number;
  pending: number;
  error: string | null;
}

export type SubmitVerdict = (item: QueueItem, verdict: Verdict) => Promise<void>;

/**
 * Cursor over one rater's queue at one stage. A verdict advances the
 * cursor immediately and submits in the background; a failed submission
 * puts the article back at the front so nothing is silently lost.
 */
export class ScreeningQueue {
  private items: QueueItem[] = [];
  private total = 0;
  private decided = 0;
  private inFlight = 0;
  private lastError: string | null = null;

  constructor(
    private readonly submit: SubmitVerdict,
    private readonly onChange?: () => void,
  ) {}

  load(items: QueueItem[]): void {
    this.items = [...items];
    this.total = items.length;
    this.decided = 0;
    this.lastError = null;
    this.notify();
  }

  current(): QueueItem | null {
    return this.items[0] ?? null;
  }

  state(): QueueState {
    const item = this.current();
    return {
      item,
      position: item ? this.total - this.items.length + 1 : 0,
      total: this.total,
      remaining: this.items.length,
      decided: this.decided,
      pending: this.inFlight,
      error: this.lastError,
    };
  }

  /** Rotate the current item to the back to look at it again later. */
  skip(): void {
    if (this.items.length < 2) return;
    const head = this.items.shift() as QueueItem;
    this.items.push(head);
    this.notify();
  }

  /**
   * Record a verdict for the current item. Resolves true once the
   * submission landed, false when it failed and the item was restored.
   */
  decide(verdict: Verdict): Promise<boolean> {
    const item = this.items.shift();
    if (!item) return Promise.resolve(false);
    this.decided += 1;
    this.inFlight += 1;
    this.lastError = null;
    this.notify();
    return this.submit(item, verdict)
      .then(() => true)
      .catch((error: Error) => {
        this.items.unshift(item);
        this.decided -= 1;
        this.lastError = error.message;
        return false;
      })
      .finally(() => {
        this.inFlight -= 1;
        this.notify();
      });
  }

  /** True when no submission is still in flight. */
  settled(): boolean {
    return this.inFlight === 0;
  }

  private notify(): void {
    this.onChange?.();
  }
}
