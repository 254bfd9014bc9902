/** Rater-facing screens and the operator dashboard, framework-free DOM.
 *
 * Gating philosophy: controls here are a UX mirror of the server's checks.
 * Everything a disabled control prevents is also refused server-side; when
 * the server rejects anyway (e.g. a submit raced ahead of the last playback
 * batch) the view re-locks and tells the rater how much is left to hear.
 */

import {
  Api,
  ApiError,
  CompletionView,
  CoverageStatus,
  SessionView,
  SubmitAck,
  Trial,
  ResponseBody,
} from "./api.js";
import { FormState, choicesEnabled, emptyForm, sliderEnabled, submitEnabled } from "./gating.js";
import { StimulusPlayer } from "./player.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

function seconds(ms: number): string {
  return `${(ms / 1000).toFixed(1)} s`;
}

// --- instruction screen -------------------------------------------------------

export function renderInstructions(
  root: HTMLElement,
  session: SessionView,
  onContinue: () => void,
): void {
  root.replaceChildren();
  const panel = el("section", { class: "panel", "data-testid": "instructions" });
  panel.append(el("h1", {}, "Before you start"));
  panel.append(
    el(
      "p",
      {},
      "Please use headphones in a quiet room. Listen to every recording " +
        "completely, without interruption, before deciding. While judging, pay " +
        "attention to cues such as:",
    ),
  );
  const list = el("ul", { class: "cue-list", "data-testid": "cue-list" });
  const cues = session.instructions.cue_list.length
    ? session.instructions.cue_list
    : ["overall naturalness of the recording"];
  for (const cue of cues) list.append(el("li", {}, cue));
  const scroller = el("div", { class: "cue-scroller", "data-testid": "cue-scroller" });
  scroller.append(list);
  panel.append(scroller);

  const headphones = el("input", { type: "checkbox", "data-testid": "headphones", id: "headphones" });
  const label = el("label", { for: "headphones" }, " I am wearing headphones in a quiet environment");
  label.prepend(headphones);
  panel.append(label);

  const cont = el("button", { "data-testid": "continue", disabled: "" }, "Continue");
  panel.append(cont);

  let scrolledToEnd = scroller.scrollHeight <= scroller.clientHeight + 4;
  const refresh = () => {
    scrolledToEnd =
      scrolledToEnd || scroller.scrollTop + scroller.clientHeight >= scroller.scrollHeight - 4;
    cont.disabled = !(headphones.checked && scrolledToEnd);
  };
  scroller.addEventListener("scroll", refresh);
  headphones.addEventListener("change", refresh);
  refresh();
  cont.addEventListener("click", () => onContinue());
  root.append(panel);
}

// --- trial screen ----------------------------------------------------------------

export interface TrialViewOptions {
  flushMs?: number;
  /** Omit real <audio> elements (headless runs drive players directly). */
  audioElements?: boolean;
}

export class TrialView {
  readonly players = new Map<string, StimulusPlayer>();
  readonly form: FormState = emptyForm();
  status: CoverageStatus | null = null;

  private readonly panel: HTMLElement;
  private readonly statusLine: HTMLElement;
  private readonly choiceButtons: HTMLButtonElement[] = [];
  private readonly sliders = new Map<string, HTMLInputElement>();
  private markerBox: HTMLElement | null = null;
  private submitButton: HTMLButtonElement | null = null;
  private submitting = false;

  constructor(
    root: HTMLElement,
    private readonly api: Api,
    private readonly sessionId: string,
    readonly trial: Trial,
    private readonly onDone: (ack: SubmitAck) => void,
    options: TrialViewOptions = {},
  ) {
    root.replaceChildren();
    this.panel = el("section", { class: "panel", "data-testid": "trial" });
    this.panel.append(el("h1", {}, `Recording ${trial.index} of ${trial.total}`));
    this.statusLine = el("p", { class: "status", "data-testid": "status" }, "");
    this.panel.append(this.statusLine);

    for (const stimulus of trial.stimuli) {
      const block = el("div", { class: "stimulus", "data-stimulus": stimulus.stimulus_id });
      const player = new StimulusPlayer(
        api,
        sessionId,
        trial.trial_id,
        stimulus,
        (status) => this.onStatus(status),
        options.flushMs ?? 2000,
      );
      this.players.set(stimulus.stimulus_id, player);
      if (options.audioElements !== false) {
        const audio = el("audio", {
          controls: "",
          preload: "auto",
          src: stimulus.audio_url,
          "data-testid": `audio-${stimulus.stimulus_id}`,
        });
        player.attach(audio);
        block.append(audio);
      }
      if (trial.test_kind === "MUSHRA") {
        block.append(this.buildSlider(stimulus.stimulus_id));
      }
      this.panel.append(block);
    }

    if (trial.test_kind === "MUSHRA") {
      this.submitButton = el("button", { "data-testid": "submit", disabled: "" }, "Submit ratings");
      this.submitButton.addEventListener("click", () => void this.submit());
      this.panel.append(this.submitButton);
    } else {
      this.buildChoiceRow();
    }
    this.refreshControls();
    root.append(this.panel);
  }

  private buildSlider(stimulusId: string): HTMLElement {
    const wrap = el("div", { class: "slider-row" });
    const slider = el("input", {
      type: "range",
      min: "0",
      max: "100",
      value: "50",
      disabled: "",
      "data-testid": `slider-${stimulusId}`,
    });
    const value = el("span", { class: "score", "data-testid": `score-${stimulusId}` }, "–");
    slider.addEventListener("input", () => {
      this.form.touched.add(stimulusId);
      this.form.scores.set(stimulusId, Number(slider.value));
      value.textContent = slider.value;
      this.refreshControls();
    });
    this.sliders.set(stimulusId, slider);
    wrap.append(slider, value);
    return wrap;
  }

  private buildChoiceRow(): void {
    const row = el("div", { class: "choices" });
    const human = el("button", { "data-testid": "choice-human", disabled: "" }, "Human");
    const tts = el("button", { "data-testid": "choice-tts", disabled: "" }, "TTS");
    this.choiceButtons.push(human, tts);
    human.addEventListener("click", () => {
      this.form.label = "human";
      this.form.markers.clear();
      this.hideMarkers();
      void this.submit(); // binary forced choice: the click is the answer
    });
    tts.addEventListener("click", () => {
      this.form.label = "tts";
      if (this.trial.test_kind === "HFR_GRANULAR") {
        this.showMarkers();
        this.refreshControls();
      } else {
        void this.submit();
      }
    });
    row.append(human, tts);
    this.panel.append(row);

    if (this.trial.test_kind === "HFR_GRANULAR") {
      this.submitButton = el("button", { "data-testid": "submit", disabled: "", hidden: "" }, "Submit");
      this.submitButton.addEventListener("click", () => void this.submit());
      this.panel.append(this.submitButton);
    }
  }

  private showMarkers(): void {
    if (this.markerBox) {
      this.markerBox.hidden = false;
      this.submitButton!.hidden = false;
      return;
    }
    const box = el("fieldset", { class: "markers", "data-testid": "markers" });
    box.append(el("legend", {}, "What gave it away? Select all that apply."));
    for (const marker of this.trial.response_schema.markers ?? []) {
      const id = `marker-${marker.marker_id}`;
      const check = el("input", { type: "checkbox", id, "data-testid": id });
      check.addEventListener("change", () => {
        if (check.checked) this.form.markers.add(marker.marker_id);
        else this.form.markers.delete(marker.marker_id);
        this.refreshControls();
      });
      const label = el("label", { for: id }, ` ${marker.display}`);
      label.prepend(check);
      box.append(label);
    }
    this.markerBox = box;
    this.panel.insertBefore(box, this.submitButton);
    this.submitButton!.hidden = false;
  }

  private hideMarkers(): void {
    if (this.markerBox) this.markerBox.hidden = true;
    if (this.submitButton) this.submitButton.hidden = true;
  }

  private onStatus(status: CoverageStatus): void {
    this.status = status;
    this.refreshControls();
  }

  refreshControls(): void {
    const ids = this.trial.stimuli.map((s) => s.stimulus_id);
    const unlocked = choicesEnabled(this.status);
    for (const button of this.choiceButtons) button.disabled = !unlocked || this.submitting;
    for (const [sid, slider] of this.sliders) {
      slider.disabled = !sliderEnabled(this.status, sid);
    }
    if (this.submitButton) {
      const ok = submitEnabled(this.trial.test_kind, this.status, ids, this.form) && !this.submitting;
      this.submitButton.disabled = !ok;
    }
    this.statusLine.textContent = this.describeState(ids);
  }

  private describeState(ids: string[]): string {
    if (this.status === null || !this.status.complete) {
      const covered = this.status?.covered_ms ?? 0;
      const required = this.status?.required_ms ?? null;
      const remaining = required === null ? null : Math.max(0, required - covered);
      return remaining === null
        ? "Play every recording all the way through to unlock the answers."
        : `Keep listening — about ${seconds(remaining)} left before you can answer.`;
    }
    if (this.trial.test_kind === "MUSHRA") {
      const untouched = ids.filter((id) => !this.form.touched.has(id)).length;
      return untouched > 0 ? `Rate every recording (${untouched} left).` : "All rated — submit when ready.";
    }
    if (this.trial.test_kind === "HFR_GRANULAR" && this.form.label === "tts" && this.form.markers.size === 0) {
      return "Select at least one marker that exposed the machine.";
    }
    return "Playback complete — make your judgment.";
  }

  responseBody(): ResponseBody {
    if (this.trial.test_kind === "MUSHRA") {
      const scores: Record<string, number> = {};
      for (const stimulus of this.trial.stimuli) {
        scores[stimulus.stimulus_id] = this.form.scores.get(stimulus.stimulus_id) ?? 0;
      }
      return { scores };
    }
    if (this.trial.test_kind === "HFR_GRANULAR") {
      return { label: this.form.label!, markers: [...this.form.markers].sort() };
    }
    return { label: this.form.label! };
  }

  async submit(): Promise<SubmitAck | null> {
    const ids = this.trial.stimuli.map((s) => s.stimulus_id);
    if (!submitEnabled(this.trial.test_kind, this.status, ids, this.form)) {
      this.refreshControls();
      return null;
    }
    this.submitting = true;
    this.refreshControls();
    try {
      for (const player of this.players.values()) {
        player.stopBatching();
        await player.flush(); // last partial batch must land before the answer
      }
      const ack = await this.api.submitResponse(this.sessionId, this.trial.trial_id, this.responseBody());
      this.onDone(ack);
      return ack;
    } catch (error) {
      this.submitting = false;
      if (error instanceof ApiError && error.code === "incomplete-playback") {
        // server said not yet: re-lock and show what is missing
        this.status = null;
        const covered = Number(error.body["covered_ms"] ?? 0);
        const required = Number(error.body["required_ms"] ?? 0);
        this.refreshControls();
        this.statusLine.textContent = `Playback incomplete: ${seconds(covered)} of ${seconds(required)} heard.`;
        return null;
      }
      this.refreshControls();
      this.statusLine.textContent = `Something went wrong: ${String(error)}. Try again.`;
      return null;
    }
  }
}

// --- completion screen --------------------------------------------------------------

export function renderCompletion(
  root: HTMLElement,
  completion: CompletionView,
  autoRedirect = true,
): void {
  root.replaceChildren();
  const panel = el("section", { class: "panel", "data-testid": "completion" });
  panel.append(el("h1", {}, "All done — thank you!"));
  panel.append(el("p", {}, "Your completion code:"));
  panel.append(el("code", { class: "code", "data-testid": "code" }, completion.completion_code));
  if (completion.redirect_url) {
    const link = el("a", { href: completion.redirect_url, "data-testid": "redirect" }, "Return to the crowdsourcing platform");
    panel.append(el("p", {}, "You will be redirected automatically. If not, use this link: "));
    panel.append(link);
    if (autoRedirect) {
      setTimeout(() => {
        try {
          window.location.assign(completion.redirect_url!);
        } catch {
          // headless environments do not navigate; the link stays available
        }
      }, 1500);
    }
  }
  root.append(panel);
}

// --- operator dashboard ----------------------------------------------------------------

export function renderDashboard(
  root: HTMLElement,
  api: Api,
  studyId: string,
  operatorToken: string | undefined,
  pollMs = 2000,
): () => void {
  root.replaceChildren();
  const panel = el("section", { class: "panel", "data-testid": "dashboard" });
  panel.append(el("h1", {}, `Study ${studyId}`));
  const funnel = el("p", { "data-testid": "funnel" }, "loading…");
  const rush = el("p", { "data-testid": "rush" }, "");
  const table = el("table", { "data-testid": "systems" });
  panel.append(funnel, rush, table);
  root.append(panel);

  const refresh = async () => {
    try {
      const progress = await api.studyProgress(studyId, operatorToken);
      const s = progress.sessions;
      funnel.textContent =
        `sessions: ${s.created} created · ${s.in_progress} in progress · ` +
        `${s.completed} completed · ${s.redeemed} redeemed`;
      rush.textContent = `rush-flagged: ${progress.rush.flagged}/${progress.rush.responses} (${progress.rush.rate_pct.toFixed(1)}%)`;
      table.replaceChildren();
      const head = el("tr");
      head.append(el("th", {}, "system"), el("th", {}, "collected"), el("th", {}, "target"));
      table.append(head);
      for (const [system, counts] of Object.entries(progress.systems)) {
        const row = el("tr", { "data-testid": `system-${system}` });
        row.append(
          el("td", {}, system),
          el("td", { "data-testid": `collected-${system}` }, String(counts.collected)),
          el("td", {}, String(counts.target)),
        );
        table.append(row);
      }
    } catch (error) {
      funnel.textContent =
        error instanceof ApiError && error.status === 403
          ? "Operator token required (add ?token=… to the URL)."
          : `Progress unavailable: ${String(error)}`;
    }
  };
  void refresh();
  const timer = setInterval(() => void refresh(), pollMs);
  return () => clearInterval(timer);
}
