"""Walkthrough: the HTTP API end to end against a temporary data directory.

Uses the in-process ASGI test client, so no port is opened; `earshot serve`
exposes exactly the same app over uvicorn.

Run:  python3 demos/04_http_service_tour.py
"""

import tempfile
from pathlib import Path

from starlette.testclient import TestClient

from earshot import Origin, Stimulus, Study, TestKind, build_trial_schedule, dump_manifest
from earshot.server import ServiceConfig, create_app

tmp = Path(tempfile.mkdtemp(prefix="earshot-demo-"))
study = Study(
    study_id="tour",
    test_kind=TestKind.HFR,
    systems=("human", "xtts"),
    utterance_count=1,
    min_raters_per_system=1,
    rng_seed=3,
    compensation_redirect="https://crowd.example/complete?cc={code}",
)
stimuli = [
    Stimulus("human-u0", "human", "u0", Origin.HUMAN, "audio/human-u0.wav", 2000),
    Stimulus("xtts-u0", "xtts", "u0", Origin.MACHINE, "audio/xtts-u0.wav", 2000),
]
study_dir = tmp / "studies" / "tour"
study_dir.mkdir(parents=True)
(study_dir / "manifest.json").write_text(dump_manifest(study, stimuli))
(study_dir / "schedule.json").write_text(
    build_trial_schedule(study, stimuli, 1, seed=3).to_json()
)
(tmp / "audio").mkdir()
for st in stimuli:
    (tmp / st.audio_ref).write_bytes(b"\x00" * 4096)  # placeholder audio bytes

app = create_app(ServiceConfig(data_dir=tmp, mac_key="tour-key"))
client = TestClient(app)

print("healthz:", client.get("/healthz").json())

created = client.post(
    "/v1/sessions",
    json={"study_id": "tour", "rater_token": "visitor", "participant_id": "crowd-42"},
).json()
sid = created["session_id"]
print("created session", sid, "| first cue:", created["instructions"]["cue_list"][0])

client.post(f"/v1/sessions/{sid}/instructions")
trial = client.get(f"/v1/sessions/{sid}/trial").json()["trial"]
print("trial:", trial["trial_id"], "stimuli:", [s["stimulus_id"] for s in trial["stimuli"]])

audio = client.get(trial["stimuli"][0]["audio_url"], headers={"Range": "bytes=0-1023"})
print("ranged audio:", audio.status_code, audio.headers["content-range"])

tid = trial["trial_id"]
status = client.post(
    f"/v1/sessions/{sid}/trials/{tid}/playback",
    json={"events": [{"start_ms": 0, "end_ms": 1200}]},
).json()
print("after 1.2 s of playback: complete =", status["complete"])

premature = client.post(f"/v1/sessions/{sid}/trials/{tid}/response", json={"label": "human"})
print("premature submit ->", premature.status_code, premature.json()["error"])

client.post(
    f"/v1/sessions/{sid}/trials/{tid}/playback",
    json={"events": [{"start_ms": 1000, "end_ms": 2000}]},
)
ack = client.post(f"/v1/sessions/{sid}/trials/{tid}/response", json={"label": "human"}).json()
print("accepted:", ack["status"], "| next:", ack["next_trial_id"])

while not (payload := client.get(f"/v1/sessions/{sid}/trial").json())["completed"]:
    t = payload["trial"]
    client.post(
        f"/v1/sessions/{sid}/trials/{t['trial_id']}/playback",
        json={"events": [{"start_ms": 0, "end_ms": 2000}]},
    )
    client.post(f"/v1/sessions/{sid}/trials/{t['trial_id']}/response", json={"label": "tts"})

done = client.post(f"/v1/sessions/{sid}/complete").json()
print("completion code:", done["completion_code"], "redirect:", done["redirect_url"])
print("progress:", client.get("/v1/studies/tour/progress").json()["sessions"])
print("event log on disk:", (tmp / "events.log").stat().st_size, "bytes at", tmp / "events.log")
