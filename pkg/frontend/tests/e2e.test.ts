/** Headless end-to-end: the real session service serves a 3-trial study,
 * this UI runs the whole rater flow with simulated playback, and the
 * resulting export contains exactly 3 accepted responses.
 *
 * The backend is the Python package one directory up; it must be installed
 * (pip install -e ..) for the spawn below to work.
 */

import { ChildProcess, execFileSync, spawn } from "node:child_process";
import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { mountApp } from "../src/app.js";

const REPO_ROOT = join(__dirname, "..", "..");
const PORT = 8719 + Math.floor(Math.random() * 200);
const BASE = `http://127.0.0.1:${PORT}`;
const STUDY_ID = "e2e-ui";

let server: ChildProcess | null = null;
let dataDir: string;

const manifest = {
  study: {
    study_id: STUDY_ID,
    test_kind: "HFR",
    systems: ["xtts"],
    utterance_count: 3,
    min_raters_per_system: 1,
    rng_seed: 77,
    compensation_redirect: "https://crowd.example/complete?cc={code}",
  },
  stimuli: [0, 1, 2].map((u) => ({
    stimulus_id: `xtts-u${u}`,
    system: "xtts",
    utterance_id: `u${u}`,
    origin: "machine",
    audio_ref: `audio/xtts-u${u}.wav`,
    duration_ms: 4000,
  })),
};

async function waitFor<T>(probe: () => T | Promise<T>, what: string, timeoutMs = 15_000): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      const value = await probe();
      if (value) return value;
    } catch (error) {
      lastError = error;
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  throw new Error(`timed out waiting for ${what}: ${String(lastError)}`);
}

beforeAll(async () => {
  dataDir = join(tmpdir(), `earshot-e2e-${Date.now()}`);
  const studyDir = join(dataDir, "studies", STUDY_ID);
  mkdirSync(studyDir, { recursive: true });
  mkdirSync(join(dataDir, "audio"), { recursive: true });
  writeFileSync(join(studyDir, "manifest.json"), JSON.stringify(manifest, null, 2));
  for (const stim of manifest.stimuli) {
    writeFileSync(join(dataDir, stim.audio_ref), Buffer.alloc(2048));
  }
  execFileSync(
    "python3",
    ["-m", "earshot.cli", "schedule", "--manifest", join(studyDir, "manifest.json"),
     "--pool", "1", "--seed", "77", "--out", join(studyDir, "schedule.json")],
    { cwd: REPO_ROOT },
  );
  const config = { host: "127.0.0.1", port: PORT, data_dir: dataDir, mac_key: "e2e-ui-key" };
  writeFileSync(join(dataDir, "config.json"), JSON.stringify(config));

  server = spawn("python3", ["-m", "earshot.cli", "serve", "--config", join(dataDir, "config.json")], {
    cwd: REPO_ROOT,
    stdio: ["ignore", "pipe", "pipe"],
  });
  await waitFor(async () => {
    const response = await fetch(`${BASE}/healthz`);
    return response.ok;
  }, "server /healthz");
}, 30_000);

afterAll(() => {
  server?.kill("SIGTERM");
});

describe("full rater flow against the live service", () => {
  it("completes a 3-trial study and the export holds 3 accepted responses", async () => {
    document.body.innerHTML = "<main id='app'></main>";
    const root = document.getElementById("app")!;
    const app = await mountApp(root, `?study=${STUDY_ID}&participant=crowd-77`, {
      api: new ApiClient(BASE),
      audioElements: false,
      flushMs: 25,
      autoRedirect: false,
    });
    expect(app.session?.trial_count).toBe(3);
    expect(root.querySelector("[data-testid=instructions]")).toBeTruthy();

    root.querySelector<HTMLInputElement>("[data-testid=headphones]")!.click();
    const cont = root.querySelector<HTMLButtonElement>("[data-testid=continue]")!;
    expect(cont.disabled).toBe(false);
    cont.click();

    for (let trialNo = 1; trialNo <= 3; trialNo++) {
      const view = await waitFor(
        () => (app.currentTrialView()?.trial.index === trialNo ? app.currentTrialView() : null),
        `trial ${trialNo} on screen`,
      );
      const human = root.querySelector<HTMLButtonElement>("[data-testid=choice-human]")!;
      expect(human.disabled).toBe(true); // nothing played yet

      // simulate playback: batched interval events stream to the server
      const player = [...view!.players.values()][0];
      player.simPlay(0);
      for (let t = 400; t <= 4000; t += 400) player.simTick(t);
      await player.simPause(4000);
      await waitFor(() => view!.status?.complete === true, "server-confirmed coverage");
      expect(human.disabled).toBe(false);
      human.click();
      await waitFor(
        () => app.currentTrialView() !== view || root.querySelector("[data-testid=completion]"),
        "advance past the trial",
      );
    }

    await app.done;
    const code = root.querySelector("[data-testid=code]")!.textContent!;
    expect(code).toMatch(/^[A-Z2-7]{8}$/);

    const csvPath = join(dataDir, "results.csv");
    execFileSync(
      "python3",
      ["-m", "earshot.cli", "export", "--data-dir", dataDir, "--study", STUDY_ID, "--out", csvPath],
      { cwd: REPO_ROOT },
    );
    const lines = readFileSync(csvPath, "utf-8").trim().split("\n");
    expect(lines).toHaveLength(1 + 3); // header + 3 accepted responses
    const header = lines[0].split(",");
    const verifiedCol = header.indexOf("playback_verified");
    const labelCol = header.indexOf("label");
    for (const line of lines.slice(1)) {
      const cells = line.split(",");
      expect(cells[verifiedCol]).toBe("true");
      expect(cells[labelCol]).toBe("human");
    }
  }, 60_000);

  it("progress endpoint reflects the completed session", async () => {
    const api = new ApiClient(BASE);
    const progress = await api.studyProgress(STUDY_ID);
    expect(progress.sessions.completed).toBe(1);
    expect(progress.sessions.redeemed).toBe(1);
    expect(progress.systems["xtts"].collected).toBe(3);
  });
});
