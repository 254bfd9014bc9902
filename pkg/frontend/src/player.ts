/** One stimulus player: a ledger bound to an audio element, batching
 * interval events to the server and reporting coverage status back.
 *
 * The same object drives real `<audio>` elements in the browser and a
 * simulated transport in headless runs: `simPlay`/`simTick`/`simPause`
 * feed the identical ledger and batching path, so tests exercise exactly
 * what raters trigger.
 */

import type { Api, CoverageStatus, TrialStimulus } from "./api.js";
import { PlaybackLedger } from "./ledger.js";

export type StatusListener = (status: CoverageStatus) => void;

export class StimulusPlayer {
  readonly ledger: PlaybackLedger;
  private flushTimer: ReturnType<typeof setInterval> | null = null;
  private inflight: Promise<CoverageStatus | null> = Promise.resolve(null);

  constructor(
    private readonly api: Api,
    private readonly sessionId: string,
    private readonly trialId: string,
    readonly stimulus: TrialStimulus,
    private readonly onStatus: StatusListener,
    private readonly flushMs = 2000,
  ) {
    this.ledger = new PlaybackLedger(stimulus.duration_ms);
  }

  /** Bind a real media element; playback rate is pinned to 1.0. */
  attach(el: HTMLAudioElement): void {
    const ms = () => el.currentTime * 1000;
    el.addEventListener("play", () => {
      this.ledger.play(ms());
      this.startBatching();
    });
    el.addEventListener("timeupdate", () => this.ledger.tick(ms()));
    el.addEventListener("seeking", () => this.ledger.seek(ms()));
    el.addEventListener("pause", () => {
      this.ledger.pause(ms());
      void this.flush();
    });
    el.addEventListener("ended", () => {
      this.ledger.pause(this.stimulus.duration_ms);
      void this.flush();
    });
    el.addEventListener("ratechange", () => {
      this.ledger.rateChanged(el.playbackRate, ms());
      if (el.playbackRate !== 1.0) el.playbackRate = 1.0;
    });
  }

  // Simulation entry points (headless runs and tests).
  simPlay(atMs = 0): void {
    this.ledger.play(atMs);
    this.startBatching();
  }

  simTick(atMs: number): void {
    this.ledger.tick(atMs);
  }

  simSeek(toMs: number): void {
    this.ledger.seek(toMs);
  }

  async simPause(atMs?: number): Promise<CoverageStatus | null> {
    this.ledger.pause(atMs);
    return this.flush();
  }

  private startBatching(): void {
    if (this.flushTimer === null) {
      this.flushTimer = setInterval(() => void this.flush(), this.flushMs);
    }
  }

  stopBatching(): void {
    if (this.flushTimer !== null) {
      clearInterval(this.flushTimer);
      this.flushTimer = null;
    }
  }

  /** Drain the ledger and post; serialized so batches stay ordered. */
  flush(): Promise<CoverageStatus | null> {
    this.inflight = this.inflight.then(async () => {
      const spans = this.ledger.drain();
      if (spans.length === 0) return null;
      const events = spans.map((s) => ({
        stimulus_id: this.stimulus.stimulus_id,
        start_ms: s.start_ms,
        end_ms: s.end_ms,
        client_ts: Date.now(),
      }));
      const status = await this.api.recordPlayback(this.sessionId, this.trialId, events);
      this.onStatus(status);
      return status;
    });
    return this.inflight;
  }
}
