/** Review-session state: the queue, the cursor, verdict syncing, and the
 * live duplicate estimate.
 *
 * Submissions are serialized: the cursor advances optimistically as soon as
 * a verdict is sent, but the next submission is refused until the service
 * acknowledges the one in flight, so the cursor can never move past an
 * unsynced item by more than one. A rejected verdict rolls the cursor back
 * to the rejected pair. Unacknowledged submissions persist locally and are
 * replayed on startup, so a page reload loses nothing.
 */

import { CuratorApi, PairView, RejectedError, Verdict } from "./api.js";
import { estimateTrueDuplicates, formatEstimate } from "./estimate.js";

export interface KeyValueStore {
  get(key: string): string | null;
  set(key: string, value: string): void;
  remove(key: string): void;
}

export class MemoryStorage implements KeyValueStore {
  private map = new Map<string, string>();
  get(key: string): string | null {
    return this.map.has(key) ? (this.map.get(key) as string) : null;
  }
  set(key: string, value: string): void {
    this.map.set(key, value);
  }
  remove(key: string): void {
    this.map.delete(key);
  }
}

const PENDING_KEY = "retaug-review-pending";

interface PendingSubmission {
  key: string;
  verdict: Verdict;
}

interface SplitTally {
  candidates: number;
  reviewed: number;
  confirmed: number;
}

export interface SessionCounts {
  submitted: number;
  confirmed: number;
  notDuplicate: number;
}

export type SyncState = "idle" | "syncing" | "error";

export class ReviewSession {
  queue: PairView[] = [];
  cursor = 0;
  counts: SessionCounts = { submitted: 0, confirmed: 0, notDuplicate: 0 };
  syncState: SyncState = "idle";
  lastError: string | null = null;
  /** true when the failed submission is safe to retry (network, not rejection) */
  retryable = false;

  private tallies = new Map<string, SplitTally>();
  private acked = new Map<string, Verdict>();
  private listeners: Array<() => void> = [];

  constructor(
    private api: CuratorApi,
    private storage: KeyValueStore = new MemoryStorage(),
    private reviewer?: string,
  ) {}

  subscribe(listener: () => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  async init(limit = 50): Promise<void> {
    await this.replayPending();
    await this.refreshTallies();
    await this.loadQueue(limit);
  }

  /** Replay a persisted, possibly unacknowledged submission from a previous
   * session. Repeats are no-ops server-side, so this is always safe. */
  async replayPending(): Promise<void> {
    const raw = this.storage.get(PENDING_KEY);
    if (raw === null) return;
    const pending = JSON.parse(raw) as PendingSubmission;
    try {
      await this.api.postVerdict(pending.key, pending.verdict, this.reviewer);
      this.storage.remove(PENDING_KEY);
    } catch (error) {
      if (error instanceof RejectedError) {
        // the service refused it outright; replaying again would not help
        this.storage.remove(PENDING_KEY);
      }
      // network errors keep the pending record for the next replay
    }
  }

  async refreshTallies(): Promise<void> {
    const report = await this.api.leakageReport();
    this.tallies.clear();
    for (const split of report.splits) {
      this.tallies.set(split.split, {
        candidates: split.candidates,
        reviewed: split.reviewed,
        confirmed: split.confirmed,
      });
    }
    this.emit();
  }

  async loadQueue(limit = 50): Promise<void> {
    this.queue = await this.api.listPairs("pending", limit);
    this.cursor = 0;
    this.emit();
  }

  current(): PairView | null {
    if (this.cursor < 0 || this.cursor >= this.queue.length) return null;
    return this.queue[this.cursor] ?? null;
  }

  /** Submit a verdict for the current pair; optimistic advance, rollback on
   * error. Returns true when the service acknowledged the verdict. */
  async submit(verdict: Verdict): Promise<boolean> {
    if (this.syncState === "syncing") return false;
    const pair = this.current();
    if (pair === null) return false;
    const index = this.cursor;

    this.storage.set(PENDING_KEY, JSON.stringify({ key: pair.key, verdict }));
    this.cursor = Math.min(this.cursor + 1, this.queue.length);
    this.syncState = "syncing";
    this.lastError = null;
    this.retryable = false;
    this.emit();

    try {
      const updated = await this.api.postVerdict(pair.key, verdict, this.reviewer);
      this.storage.remove(PENDING_KEY);
      this.applyAck(pair, verdict);
      this.queue[index] = updated;
      this.syncState = "idle";
      this.emit();
      return true;
    } catch (error) {
      this.cursor = index; // rollback: the rejected pair is current again
      this.syncState = "error";
      if (error instanceof RejectedError) {
        this.storage.remove(PENDING_KEY);
        this.lastError = error.message;
        this.retryable = false;
      } else {
        // connectivity problem: keep the pending record for replay
        this.lastError = error instanceof Error ? error.message : String(error);
        this.retryable = true;
      }
      this.emit();
      return false;
    }
  }

  private applyAck(pair: PairView, verdict: Verdict): void {
    const tally = this.tallies.get(pair.split) ?? {
      candidates: 0,
      reviewed: 0,
      confirmed: 0,
    };
    const previous = this.acked.get(pair.key);
    if (previous === undefined) {
      tally.reviewed += 1;
      if (verdict === "true-duplicate") tally.confirmed += 1;
    } else if (previous !== verdict) {
      tally.confirmed += verdict === "true-duplicate" ? 1 : -1;
    }
    this.tallies.set(pair.split, tally);
    this.acked.set(pair.key, verdict);

    this.counts.submitted += 1;
    if (verdict === "true-duplicate") this.counts.confirmed += 1;
    else this.counts.notDuplicate += 1;
  }

  /** Step back to re-review the previous pair (re-verdicts are last-write-wins). */
  undo(): void {
    if (this.syncState === "syncing") return;
    if (this.cursor > 0) {
      this.cursor -= 1;
      this.emit();
    }
  }

  /** Re-send a submission that failed with a connectivity error. */
  async retry(): Promise<boolean> {
    if (!this.retryable) return false;
    const raw = this.storage.get(PENDING_KEY);
    if (raw === null) return false;
    const pending = JSON.parse(raw) as PendingSubmission;
    this.syncState = "idle";
    const verdictAt = this.queue.findIndex((p) => p.key === pending.key);
    if (verdictAt >= 0) this.cursor = verdictAt;
    return this.submit(pending.verdict);
  }

  splits(): string[] {
    return [...this.tallies.keys()].sort();
  }

  /** Client-side estimate for one split: round(candidates * confirmed / reviewed). */
  estimateFor(split: string): number | null {
    const tally = this.tallies.get(split);
    if (tally === undefined) return null;
    return estimateTrueDuplicates(tally.candidates, tally.reviewed, tally.confirmed);
  }

  tallyFor(split: string): SplitTally | undefined {
    const tally = this.tallies.get(split);
    return tally === undefined ? undefined : { ...tally };
  }

  /** Estimate shown in the panel: the current pair's split, falling back to
   * the sole known split. */
  liveEstimate(): { split: string | null; text: string; value: number | null } {
    const pair = this.current();
    let split = pair?.split ?? null;
    if (split === null && this.tallies.size === 1) {
      split = this.splits()[0] ?? null;
    }
    const value = split === null ? null : this.estimateFor(split);
    return { split, text: formatEstimate(value), value };
  }

  /** Fetch the server report and adopt it; reports whether the client-side
   * estimates already agreed (they must whenever verdict sets match). */
  async reconcile(): Promise<{ matched: boolean; mismatchedSplits: string[] }> {
    const report = await this.api.leakageReport();
    const mismatched: string[] = [];
    for (const split of report.splits) {
      const clientEstimate = this.estimateFor(split.split);
      const serverEstimate = split.reviewed === 0 ? null : split.estimated;
      if (clientEstimate !== serverEstimate) mismatched.push(split.split);
      this.tallies.set(split.split, {
        candidates: split.candidates,
        reviewed: split.reviewed,
        confirmed: split.confirmed,
      });
    }
    this.emit();
    return { matched: mismatched.length === 0, mismatchedSplits: mismatched };
  }
}
