/** Application entry: crowdsourcing handshake, session flow, dashboard.
 *
 * Rater entry URL: /?study=STUDY_ID&participant=PID[&session=SID]
 * (the crowdsourcing platform substitutes its participant/session ids);
 * the rater token defaults to the platform session id, then participant id.
 *
 * Operator entry URL: /?operator=1&study=STUDY_ID&token=OPERATOR_TOKEN
 */

import { Api, ApiClient, SubmitAck, SessionView } from "./api.js";
import { TrialView, renderCompletion, renderDashboard, renderInstructions } from "./views.js";

export interface AppOptions {
  api?: Api;
  flushMs?: number;
  audioElements?: boolean;
  autoRedirect?: boolean;
  dashboardPollMs?: number;
}

export interface AppHandle {
  session: SessionView | null;
  currentTrialView: () => TrialView | null;
  /** resolves when the session reaches the completion screen */
  done: Promise<void>;
}

export async function mountApp(
  root: HTMLElement,
  search: string,
  options: AppOptions = {},
): Promise<AppHandle> {
  const params = new URLSearchParams(search);
  const api: Api = options.api ?? new ApiClient("");

  if (params.get("operator")) {
    renderDashboard(root, api, params.get("study") ?? "", params.get("token") ?? undefined, options.dashboardPollMs);
    return { session: null, currentTrialView: () => null, done: Promise.resolve() };
  }

  const studyId = params.get("study") ?? "";
  const participant = params.get("participant") ?? params.get("PROLIFIC_PID") ?? "";
  const token = params.get("session") ?? params.get("token") ?? participant;
  if (!studyId || !token) {
    root.replaceChildren();
    const message = document.createElement("p");
    message.setAttribute("data-testid", "entry-error");
    message.textContent = "This link is missing its study or participant parameters.";
    root.append(message);
    return { session: null, currentTrialView: () => null, done: Promise.resolve() };
  }

  const session = await api.createSession(studyId, token, participant);
  let trialView: TrialView | null = null;
  let finish: () => void;
  const done = new Promise<void>((resolve) => (finish = resolve));

  const advance = async (_ack?: SubmitAck): Promise<void> => {
    const payload = await api.currentTrial(session.session_id);
    if (payload.completed || payload.trial === null) {
      const completion = await api.completeSession(session.session_id);
      trialView = null;
      renderCompletion(root, completion, options.autoRedirect ?? true);
      finish();
      return;
    }
    trialView = new TrialView(
      root,
      api,
      session.session_id,
      payload.trial,
      (ack) => void advance(ack),
      { flushMs: options.flushMs, audioElements: options.audioElements },
    );
  };

  renderInstructions(root, session, () => {
    void api.acknowledgeInstructions(session.session_id).then(() => advance());
  });

  return { session, currentTrialView: () => trialView, done };
}

/** Browser bootstrap; tests and headless runs call mountApp directly. */
export function bootstrap(): void {
  const root = document.getElementById("app");
  if (root) {
    void mountApp(root, window.location.search).catch((error) => {
      root.textContent = `Could not start the session: ${String(error)}`;
    });
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  bootstrap();
}
