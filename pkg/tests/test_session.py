"""Session state machine, playback gating, completion codes, event sourcing."""

import pytest

from earshot.core import TestKind
from earshot.eventlog import EventLog, export_responses
from earshot.session import (
    ConflictError,
    ForbiddenError,
    IncompletePlaybackError,
    IntervalSet,
    InvalidStateError,
    NotFoundError,
    OutOfOrderError,
    PrematureCompletionError,
    ResponseSchemaError,
    SessionService,
    completion_code,
    validate_response_payload,
)
from earshot.stats import ResponseSet

from conftest import build_bundle, build_service


# --- interval merge unit suite -----------------------------------------------


def test_intervals_disjoint():
    iv = IntervalSet()
    iv.add(0, 4000)
    iv.add(6000, 10000)
    assert iv.covered_ms == 8000
    assert iv.spans == ((0, 4000), (6000, 10000))


def test_intervals_overlapping_merge_to_one():
    iv = IntervalSet()
    iv.add(0, 6000)
    iv.add(5000, 10000)
    assert iv.spans == ((0, 10000),)
    assert iv.covered_ms == 10000


def test_intervals_duplicates_do_not_double_count():
    iv = IntervalSet()
    iv.add(100, 300)
    iv.add(100, 300)
    assert iv.covered_ms == 200


def test_intervals_out_of_order_and_touching():
    iv = IntervalSet()
    iv.add(5000, 7000)
    iv.add(0, 2000)
    iv.add(2000, 5000)  # touching spans coalesce
    assert iv.spans == ((0, 7000),)


def test_intervals_nested_and_monotone():
    iv = IntervalSet()
    seen = []
    for span in ((1000, 9000), (2000, 3000), (0, 500), (8999, 9001)):
        iv.add(*span)
        seen.append(iv.covered_ms)
    assert seen == sorted(seen), "coverage must never decrease"
    assert iv.covered_ms == 8000 + 500 + 1  # base span, prefix, one-ms tail


# --- session lifecycle --------------------------------------------------------


def full_playback(service, view_trial):
    return service.record_playback(
        view_trial["session_id"],
        view_trial["trial"]["trial_id"],
        [
            {"stimulus_id": s["stimulus_id"], "start_ms": 0, "end_ms": s["duration_ms"]}
            for s in view_trial["trial"]["stimuli"]
        ],
    )


def run_whole_session(service, study_id, token, answer=None):
    view = service.create_session(study_id, token)
    sid = view["session_id"]
    service.acknowledge_instructions(sid)
    while True:
        trial = service.current_trial(sid)
        if trial["completed"]:
            break
        full_playback(service, trial)
        payload = answer(trial) if answer else {"label": "human"}
        service.submit_response(sid, trial["trial"]["trial_id"], payload)
    return service.complete_session(sid)


def test_create_session_returns_instruction_payload():
    service, bundle, _, _ = build_service()
    view = service.create_session("study-1", "tok-a", participant_id="participant-123")
    assert view["phase"] == "created"
    assert view["trial_count"] == 4
    assert view["instructions"]["cue_list"]
    assert view["instructions"]["test_kind"] == "HFR"


def test_duplicate_create_conflicts():
    service, _, _, _ = build_service()
    service.create_session("study-1", "tok-a")
    with pytest.raises(ConflictError):
        service.create_session("study-1", "tok-a")


def test_unknown_study_not_found():
    service, _, _, _ = build_service()
    with pytest.raises(NotFoundError):
        service.create_session("ghost", "tok-a")


def test_unassigned_rater_forbidden_without_autobind():
    service, _, _, _ = build_service(auto_bind=False)
    with pytest.raises(ForbiddenError):
        service.create_session("study-1", "random-token")
    # schedule slot names remain valid tokens
    view = service.create_session("study-1", "r0001")
    assert view["rater_id"] == "r0001"


def test_autobind_assigns_slots_until_exhausted():
    service, _, _, _ = build_service()  # pool of 2
    a = service.create_session("study-1", "alice")
    b = service.create_session("study-1", "bob")
    assert {a["rater_id"], b["rater_id"]} == {"r0001", "r0002"}
    with pytest.raises(ForbiddenError):
        service.create_session("study-1", "carol")


def test_trial_requires_acknowledged_instructions():
    service, _, _, _ = build_service()
    view = service.create_session("study-1", "a")
    with pytest.raises(InvalidStateError):
        service.current_trial(view["session_id"])
    service.acknowledge_instructions(view["session_id"])
    trial = service.current_trial(view["session_id"])
    assert trial["trial"]["index"] == 1
    assert trial["trial"]["total"] == 4


def test_trial_payload_never_leaks_system_or_origin():
    service, _, _, _ = build_service()
    view = service.create_session("study-1", "a")
    service.acknowledge_instructions(view["session_id"])
    trial = service.current_trial(view["session_id"])
    text = str(trial)
    assert "origin" not in text
    assert "system" not in text.replace("test_kind", "")


def test_playback_before_fetch_is_out_of_order():
    service, _, _, _ = build_service()
    view = service.create_session("study-1", "a")
    sid = view["session_id"]
    service.acknowledge_instructions(sid)
    # the session knows its first trial id even though it was never served
    first_trial_id = service.sessions[sid].trials[0].spec.trial_id
    with pytest.raises(InvalidStateError):
        service.record_playback(sid, first_trial_id, [{"start_ms": 0, "end_ms": 100}])


def test_partial_coverage_blocks_submission_with_covered_ms():
    service, _, _, _ = build_service()  # stimuli are 10000 ms
    view = service.create_session("study-1", "a")
    sid = view["session_id"]
    service.acknowledge_instructions(sid)
    trial = service.current_trial(sid)
    tid = trial["trial"]["trial_id"]
    status = service.record_playback(
        sid, tid, [{"start_ms": 0, "end_ms": 4000}, {"start_ms": 6000, "end_ms": 10000}]
    )
    assert status["covered_ms"] == 8000
    assert not status["complete"]
    with pytest.raises(IncompletePlaybackError) as exc:
        service.submit_response(sid, tid, {"label": "human"})
    assert exc.value.covered_ms == 8000
    assert exc.value.payload()["covered_ms"] == 8000


def test_overlapping_events_complete_coverage():
    service, _, _, _ = build_service()
    view = service.create_session("study-1", "a")
    sid = view["session_id"]
    service.acknowledge_instructions(sid)
    trial = service.current_trial(sid)
    tid = trial["trial"]["trial_id"]
    service.record_playback(sid, tid, [{"start_ms": 0, "end_ms": 6000}])
    status = service.record_playback(sid, tid, [{"start_ms": 5000, "end_ms": 10000}])
    assert status["complete"] and status["covered_ms"] == 10000
    ack = service.submit_response(sid, tid, {"label": "tts"})
    assert ack["status"] == "accepted"
    assert ack["next_trial_id"]


def test_coverage_tolerance_allows_codec_tail():
    service, _, _, _ = build_service(coverage_tolerance_ms=250)
    view = service.create_session("study-1", "a")
    sid = view["session_id"]
    service.acknowledge_instructions(sid)
    trial = service.current_trial(sid)
    tid = trial["trial"]["trial_id"]
    status = service.record_playback(sid, tid, [{"start_ms": 0, "end_ms": 9750}])
    assert status["complete"]
    status2 = service.record_playback(sid, tid, [{"start_ms": 0, "end_ms": 9499}])
    assert status2["complete"]  # monotone: once complete, stays complete


def test_bad_playback_events_rejected_individually():
    service, _, _, _ = build_service()
    view = service.create_session("study-1", "a")
    sid = view["session_id"]
    service.acknowledge_instructions(sid)
    trial = service.current_trial(sid)
    tid = trial["trial"]["trial_id"]
    status = service.record_playback(
        sid,
        tid,
        [
            {"start_ms": 0, "end_ms": 1000, "playback_rate": 2.0},
            {"start_ms": 500, "end_ms": 200},
            {"start_ms": 0, "end_ms": 99_999},
            {"stimulus_id": "ghost", "start_ms": 0, "end_ms": 10},
            {"start_ms": 0, "end_ms": 1000},
        ],
    )
    assert len(status["rejected"]) == 4
    assert status["covered_ms"] == 1000
    reasons = " ".join(r["reason"] for r in status["rejected"])
    assert "playback_rate" in reasons and "outside" in reasons


def test_playback_for_wrong_trial_is_out_of_order():
    service, _, _, _ = build_service()
    view = service.create_session("study-1", "a")
    sid = view["session_id"]
    service.acknowledge_instructions(sid)
    service.current_trial(sid)
    with pytest.raises(OutOfOrderError):
        service.record_playback(sid, "not-current", [{"start_ms": 0, "end_ms": 10}])


def test_schema_mismatches_rejected():
    service, bundle, _, _ = build_service()
    view = service.create_session("study-1", "a")
    sid = view["session_id"]
    service.acknowledge_instructions(sid)
    trial = service.current_trial(sid)
    tid = trial["trial"]["trial_id"]
    full_playback(service, trial)
    for bad in (
        {"label": "maybe"},
        {"label": "tts", "markers": ["digital_voice"]},  # markers on plain HFR
        {"scores": {"x": 50}},
        {},
        "human",
    ):
        with pytest.raises(ResponseSchemaError):
            service.submit_response(sid, tid, bad)


def test_duplicate_submit_replays_original_ack():
    service, _, _, _ = build_service()
    view = service.create_session("study-1", "a")
    sid = view["session_id"]
    service.acknowledge_instructions(sid)
    trial = service.current_trial(sid)
    tid = trial["trial"]["trial_id"]
    full_playback(service, trial)
    first = service.submit_response(sid, tid, {"label": "human"})
    again = service.submit_response(sid, tid, {"label": "tts"})  # retry, even different
    assert again is first or again == first
    # no second response was stored
    assert service.sessions[sid].responded_count() == 1


def test_completion_flow_and_codes():
    service, bundle, _, _ = build_service()
    result = run_whole_session(service, "study-1", "alice")
    assert len(result["completion_code"]) == 8
    assert result["completion_code"] == completion_code("test-key", "study-1", "r0001")
    assert result["redirect_url"].endswith(result["completion_code"])
    # idempotent: completing again returns the same code
    sid = result["session_id"]
    assert service.complete_session(sid)["completion_code"] == result["completion_code"]

    other = run_whole_session(service, "study-1", "bob")
    assert other["completion_code"] != result["completion_code"]


def test_premature_completion_reports_remaining():
    service, _, _, _ = build_service()
    view = service.create_session("study-1", "a")
    sid = view["session_id"]
    service.acknowledge_instructions(sid)
    trial = service.current_trial(sid)
    full_playback(service, trial)
    service.submit_response(sid, trial["trial"]["trial_id"], {"label": "human"})
    with pytest.raises(PrematureCompletionError) as exc:
        service.complete_session(sid)
    assert exc.value.remaining == 3
    assert "3 trials remaining" in str(exc.value)


def test_single_trial_remaining_message_is_singular():
    service, _, _, _ = build_service(bundle=build_bundle(utterances=1, systems=("xtts",), pool=1))
    view = service.create_session("study-1", "a")
    with pytest.raises(PrematureCompletionError) as exc:
        service.complete_session(view["session_id"])
    assert "1 trial remaining" in str(exc.value)


def test_response_and_decision_times_measured_server_side():
    service, _, log, clock = build_service()
    view = service.create_session("study-1", "a")
    sid = view["session_id"]
    service.acknowledge_instructions(sid)
    trial = service.current_trial(sid)  # served_at = t0
    tid = trial["trial"]["trial_id"]
    full_playback(service, trial)  # playback_complete at t0 + step
    service.submit_response(sid, tid, {"label": "human"})  # responded at t0 + 2*step
    accepted = [r for r in log.replay() if r.kind == "response-accepted"][0]
    assert accepted.payload["response_time_ms"] == 2 * clock.step
    assert accepted.payload["decision_time_ms"] == clock.step
    assert accepted.payload["responded_at"] - accepted.payload["served_at"] == 2 * clock.step


def test_granular_marker_rules_enforced():
    bundle = build_bundle(kind=TestKind.HFR_GRANULAR, pool=1, systems=("human", "xtts"), utterances=1)
    service, _, _, _ = build_service(bundle=bundle)
    view = service.create_session("study-1", "a")
    sid = view["session_id"]
    service.acknowledge_instructions(sid)
    trial = service.current_trial(sid)
    tid = trial["trial"]["trial_id"]
    assert trial["trial"]["response_schema"]["markers"], "granular trials must ship the catalog"
    full_playback(service, trial)
    with pytest.raises(ResponseSchemaError, match="at least one marker"):
        service.submit_response(sid, tid, {"label": "tts", "markers": []})
    with pytest.raises(ResponseSchemaError, match="cannot carry markers"):
        service.submit_response(sid, tid, {"label": "human", "markers": ["digital_voice"]})
    with pytest.raises(ResponseSchemaError, match="not in the study catalog"):
        service.submit_response(sid, tid, {"label": "tts", "markers": ["sounds_weird"]})
    ack = service.submit_response(sid, tid, {"label": "tts", "markers": ["digital_voice", "unnatural_pitch"]})
    assert ack["status"] == "accepted"


def test_mushra_trial_gates_each_stimulus_and_scores_all():
    bundle = build_bundle(kind=TestKind.MUSHRA, systems=("human", "a", "b"), utterances=1, pool=1)
    service, _, _, _ = build_service(bundle=bundle)
    view = service.create_session("study-1", "a")
    sid = view["session_id"]
    service.acknowledge_instructions(sid)
    trial = service.current_trial(sid)
    tid = trial["trial"]["trial_id"]
    stims = [s["stimulus_id"] for s in trial["trial"]["stimuli"]]
    assert len(stims) == 3

    service.record_playback(sid, tid, [{"stimulus_id": stims[0], "start_ms": 0, "end_ms": 10_000}])
    with pytest.raises(IncompletePlaybackError):
        service.submit_response(sid, tid, {"scores": {s: 50 for s in stims}})
    for s in stims[1:]:
        service.record_playback(sid, tid, [{"stimulus_id": s, "start_ms": 0, "end_ms": 10_000}])
    with pytest.raises(ResponseSchemaError):
        service.submit_response(sid, tid, {"scores": {stims[0]: 50}})  # missing stimuli
    with pytest.raises(ResponseSchemaError):
        service.submit_response(sid, tid, {"scores": {**{s: 50 for s in stims}, stims[0]: 101}})
    ack = service.submit_response(sid, tid, {"scores": {s: (i + 1) * 20 for i, s in enumerate(stims)}})
    assert ack["completed"] is True


def test_progress_counts_systems_funnel_and_rush():
    service, bundle, _, _ = build_service()
    empty = service.study_progress("study-1")
    assert empty["sessions"] == {"created": 0, "in_progress": 0, "completed": 0, "redeemed": 0}
    assert all(v["collected"] == 0 for v in empty["systems"].values())

    run_whole_session(service, "study-1", "alice")
    view = service.create_session("study-1", "bob")
    progress = service.study_progress("study-1")
    assert progress["sessions"] == {"created": 2, "in_progress": 1, "completed": 1, "redeemed": 1}
    collected = {k: v["collected"] for k, v in progress["systems"].items()}
    assert sum(collected.values()) == 4
    assert progress["systems"]["human"]["target"] == bundle.study.min_raters_per_system * 2
    assert progress["rush"]["responses"] == 4


def test_event_log_replay_reconstructs_identical_state():
    service, bundle, log, clock = build_service()
    run_whole_session(service, "study-1", "alice")
    view = service.create_session("study-1", "bob")
    sid = view["session_id"]
    service.acknowledge_instructions(sid)
    trial = service.current_trial(sid)
    service.record_playback(sid, trial["trial"]["trial_id"], [{"start_ms": 0, "end_ms": 3000}])

    rebuilt = SessionService({bundle.study.study_id: bundle}, log, mac_key="test-key")
    assert rebuilt.state_snapshot() == service.state_snapshot()


def test_no_stored_response_without_verified_playback():
    """Drive random event sequences; the store must never hold a response
    for a trial whose coverage was incomplete at acceptance time."""
    import random

    rng = random.Random(99)
    for round_no in range(30):
        service, bundle, log, _ = build_service()
        view = service.create_session("study-1", "a")
        sid = view["session_id"]
        service.acknowledge_instructions(sid)
        for _ in range(rng.randint(3, 25)):
            action = rng.choice(("fetch", "play", "submit"))
            try:
                if action == "fetch":
                    service.current_trial(sid)
                elif action == "play":
                    trial = service.sessions[sid].current
                    if trial:
                        start = rng.randrange(0, 9000)
                        service.record_playback(
                            sid,
                            trial.spec.trial_id,
                            [{"start_ms": start, "end_ms": rng.randrange(start + 1, 10_001)}],
                        )
                else:
                    trial = service.sessions[sid].current
                    if trial:
                        service.submit_response(sid, trial.spec.trial_id, {"label": "human"})
            except Exception:
                pass
        for trial_state in service.sessions[sid].trials:
            if trial_state.response is not None:
                covered = sum(iv.covered_ms for iv in trial_state.coverage.values())
                required = sum(
                    bundle.stimuli[s].duration_ms - service.coverage_tolerance_ms
                    for s in trial_state.spec.stimulus_ids
                )
                assert covered >= required


def test_export_responses_roundtrips_through_stats(tmp_path):
    service, bundle, log, _ = build_service()
    run_whole_session(service, "study-1", "alice")
    run_whole_session(service, "study-1", "bob", answer=lambda t: {"label": "tts"})
    csv_text = export_responses(log.replay(), bundle.study, bundle.stimuli, bundle.schedule)
    csv_again = export_responses(log.replay(), bundle.study, bundle.stimuli, bundle.schedule)
    assert csv_text == csv_again  # byte-identical re-export

    path = tmp_path / "results.csv"
    path.write_text(csv_text)
    rs = ResponseSet.from_csv(path)
    assert len(rs) == 8
    raters = sorted({r.rater_id for r in rs})
    assert raters == ["r0001", "r0002"]
    labels = {r.rater_id: {x.label for x in rs if x.rater_id == r.rater_id} for r in rs}
    assert labels["r0001"] == {"human"} and labels["r0002"] == {"tts"}


def test_export_empty_study_is_header_only():
    service, bundle, log, _ = build_service()
    csv_text = export_responses(log.replay(), bundle.study, bundle.stimuli, bundle.schedule)
    lines = csv_text.strip().split("\n")
    assert len(lines) == 1 and lines[0].startswith("study_id,")


def test_validate_response_payload_direct():
    from earshot.assignment import TrialSpec

    study = build_bundle(pool=1).study
    spec = TrialSpec("t1", ("x",))
    assert validate_response_payload({"label": "human"}, study, spec) == {"label": "human"}
    with pytest.raises(ResponseSchemaError):
        validate_response_payload({"label": "human", "extra": 1}, study, spec)
