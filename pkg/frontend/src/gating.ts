/** Pure enablement predicates for response controls.
 *
 * These mirror server-side rules so the UI never *offers* an action the
 * server would refuse; the server check stays authoritative either way.
 */

import type { CoverageStatus, TestKind } from "./api.js";

export interface FormState {
  label: "human" | "tts" | null;
  markers: Set<string>;
  scores: Map<string, number>;
  touched: Set<string>;
}

export function emptyForm(): FormState {
  return { label: null, markers: new Set(), scores: new Map(), touched: new Set() };
}

export function coverageComplete(status: CoverageStatus | null): boolean {
  return status !== null && status.complete;
}

export function stimulusComplete(status: CoverageStatus | null, stimulusId: string): boolean {
  return status !== null && (status.stimuli[stimulusId]?.complete ?? false);
}

/** Choice buttons (human/tts) unlock only on server-confirmed full coverage. */
export function choicesEnabled(status: CoverageStatus | null): boolean {
  return coverageComplete(status);
}

/** A MUSHRA slider unlocks once its own stimulus has been fully played. */
export function sliderEnabled(status: CoverageStatus | null, stimulusId: string): boolean {
  return stimulusComplete(status, stimulusId);
}

export function submitEnabled(
  kind: TestKind,
  status: CoverageStatus | null,
  stimulusIds: string[],
  form: FormState,
): boolean {
  if (!coverageComplete(status)) return false;
  switch (kind) {
    case "HFR":
      return form.label !== null;
    case "HFR_GRANULAR":
      // a tts judgment must name at least one perceptual flaw
      return form.label === "human" || (form.label === "tts" && form.markers.size > 0);
    case "MUSHRA":
      return stimulusIds.every(
        (id) => stimulusComplete(status, id) && form.touched.has(id),
      );
  }
}
