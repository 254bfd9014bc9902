"""Walkthrough: run a whole study in-process with synthetic raters.

Shows the session loop every rater goes through (instructions, gated
playback, judgment), what the operator progress view reports, and the
results CSV that comes out of the event log at the end.

Run:  python3 demos/02_run_study_simulation.py
"""

import random

from earshot import (
    EventLog,
    Origin,
    SessionService,
    Stimulus,
    Study,
    StudyBundle,
    TestKind,
    build_trial_schedule,
    export_responses,
)
from earshot.simulate import play_fully, random_answer, simulate_session

study = Study(
    study_id="demo-gran",
    test_kind=TestKind.HFR_GRANULAR,
    systems=("human", "xtts"),
    utterance_count=3,
    min_raters_per_system=4,
    rng_seed=11,
    compensation_redirect="https://crowd.example/complete?cc={code}",
)
from earshot import DEFAULT_MARKER_CATALOG

study = Study(**{**study.__dict__, "marker_catalog": DEFAULT_MARKER_CATALOG})

stimuli = [
    Stimulus(
        stimulus_id=f"{system}-u{u}",
        system=system,
        utterance_id=f"u{u}",
        origin=Origin.HUMAN if system == "human" else Origin.MACHINE,
        audio_ref=f"audio/{system}-u{u}.wav",
        duration_ms=5000,
    )
    for system in study.systems
    for u in range(study.utterance_count)
]
schedule = build_trial_schedule(study, stimuli, rater_pool_size=4, seed=study.rng_seed)

log = EventLog()
service = SessionService(
    {study.study_id: StudyBundle.build(study, stimuli, schedule)}, log, mac_key="demo-key"
)

# One rater, narrated step by step.
rng = random.Random(5)
view = service.create_session("demo-gran", "first-rater", participant_id="crowd-0001")
print("session:", view["session_id"], "| cue list begins:", view["instructions"]["cue_list"][0])
service.acknowledge_instructions(view["session_id"])
trial = service.current_trial(view["session_id"])["trial"]
print("trial 1 of", trial["total"], "->", trial["stimuli"][0]["stimulus_id"])

# Partial playback is not enough: the submit below is rejected server-side.
sid = view["session_id"]
service.record_playback(sid, trial["trial_id"], [{"start_ms": 0, "end_ms": 2000}])
try:
    service.submit_response(sid, trial["trial_id"], {"label": "human"})
except Exception as e:
    print("submit before full playback ->", e)
service.record_playback(sid, trial["trial_id"], [{"start_ms": 1500, "end_ms": 5000}])
ack = service.submit_response(sid, trial["trial_id"], {"label": "human"})
print("accepted; next trial:", ack["next_trial_id"])

# Finish the narrated rater's remaining trials, then redeem the code.
while True:
    payload = service.current_trial(sid)
    if payload["completed"]:
        break
    t = payload["trial"]
    play_fully(service, sid, t, rng)
    service.submit_response(sid, t["trial_id"], random_answer(t, rng))
done = service.complete_session(sid)
print("completion code:", done["completion_code"], "->", done["redirect_url"])

# Three more synthetic raters fill the remaining schedule slots.
for token in ("rater-b", "rater-c", "rater-d"):
    simulate_session(service, "demo-gran", token, rng)

progress = service.study_progress("demo-gran")
print("\nprogress:", progress["sessions"])
for system, counts in progress["systems"].items():
    print(f"  {system}: {counts['collected']} / target {counts['target']}")

csv_text = export_responses(log.replay(), study, {s.stimulus_id: s for s in stimuli}, schedule)
print("\nexported CSV rows:", len(csv_text.strip().splitlines()) - 1)
print(csv_text.splitlines()[0])
print(csv_text.splitlines()[1])
