/**
 * Cursor over one rater's queue at one stage. A verdict advances the
 * cursor immediately and submits in the background; a failed submission
 * puts the article back at the front so nothing is silently lost.
 */
export class ScreeningQueue {
    constructor(submit, onChange) {
        this.submit = submit;
        this.onChange = onChange;
        this.items = [];
        this.total = 0;
        this.decided = 0;
        this.inFlight = 0;
        this.lastError = null;
    }
    load(items) {
        this.items = [...items];
        this.total = items.length;
        this.decided = 0;
        this.lastError = null;
        this.notify();
    }
    current() {
        return this.items[0] ?? null;
    }
    state() {
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
    skip() {
        if (this.items.length < 2)
            return;
        const head = this.items.shift();
        this.items.push(head);
        this.notify();
    }
    /**
     * Record a verdict for the current item. Resolves true once the
     * submission landed, false when it failed and the item was restored.
     */
    decide(verdict) {
        const item = this.items.shift();
        if (!item)
            return Promise.resolve(false);
        this.decided += 1;
        this.inFlight += 1;
        this.lastError = null;
        this.notify();
        return this.submit(item, verdict)
            .then(() => true)
            .catch((error) => {
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
    settled() {
        return this.inFlight === 0;
    }
    notify() {
        this.onChange?.();
    }
}
