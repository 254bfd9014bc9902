/** Playback ledger: tracks which audio-timeline intervals actually played.
 *
 * Seeking and pausing are allowed, but only time that really elapsed under
 * playback earns credit: a jump (forward or backward) closes the open
 * segment and starts a new one at the landing position, and any playback
 * rate other than 1.0 suspends crediting entirely. The server re-merges
 * whatever we send, so overlapping reports are harmless; missing time is
 * what the rater still has to listen to.
 */

export interface Span {
  start_ms: number;
  end_ms: number;
}

/** Forward progress between ticks beyond this is treated as a silent seek. */
const JUMP_THRESHOLD_MS = 1500;

export class PlaybackLedger {
  private closed: Span[] = [];
  private openStart: number | null = null;
  private openEnd = 0;
  private suspended = false;

  constructor(readonly durationMs: number) {}

  private clamp(ms: number): number {
    return Math.max(0, Math.min(Math.round(ms), this.durationMs));
  }

  private closeOpen(): void {
    if (this.openStart !== null && this.openEnd > this.openStart) {
      this.closed.push({ start_ms: this.openStart, end_ms: this.openEnd });
    }
    this.openStart = null;
  }

  play(atMs: number): void {
    this.closeOpen();
    if (!this.suspended) {
      this.openStart = this.clamp(atMs);
      this.openEnd = this.openStart;
    }
  }

  tick(atMs: number): void {
    if (this.openStart === null || this.suspended) return;
    const position = this.clamp(atMs);
    const delta = position - this.openEnd;
    if (delta >= 0 && delta <= JUMP_THRESHOLD_MS) {
      this.openEnd = position;
    } else {
      // backward scrub or an unreported jump: no credit for skipped audio
      this.closeOpen();
      this.openStart = position;
      this.openEnd = position;
    }
  }

  seek(toMs: number): void {
    const playing = this.openStart !== null;
    this.closeOpen();
    if (playing && !this.suspended) {
      this.openStart = this.clamp(toMs);
      this.openEnd = this.openStart;
    }
  }

  pause(atMs?: number): void {
    if (atMs !== undefined) this.tick(atMs);
    this.closeOpen();
  }

  /** rate != 1.0 stops crediting until the rate returns to 1.0. */
  rateChanged(rate: number, atMs: number): void {
    if (rate === 1.0) {
      const wasSuspended = this.suspended;
      this.suspended = false;
      if (wasSuspended) this.play(atMs);
    } else {
      this.tick(atMs);
      this.closeOpen();
      this.suspended = true;
    }
  }

  /** Spans accumulated since the last drain; the open segment is emitted
   * incrementally so repeated drains never lose or double-report time. */
  drain(): Span[] {
    const spans = [...this.closed];
    this.closed = [];
    if (this.openStart !== null && this.openEnd > this.openStart) {
      spans.push({ start_ms: this.openStart, end_ms: this.openEnd });
      this.openStart = this.openEnd;
    }
    return spans.filter((s) => s.end_ms > s.start_ms);
  }

  get hasPending(): boolean {
    return this.closed.length > 0 || (this.openStart !== null && this.openEnd > this.openStart);
  }
}
