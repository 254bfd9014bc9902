"""Synthetic raters: drive full sessions through the service layer.

Useful for smoke-testing a deployment before recruiting anyone, generating
fixture logs for the statistics engine, and the randomized event-sourcing
checks in the test suite.  The simulator only speaks the public service
API, so everything it produces went through the same playback gate real
raters face.
"""

from __future__ import annotations

import random
from typing import Callable, Optional

from .core import LABEL_HUMAN, LABEL_TTS, TestKind
from .session import SessionService

Answerer = Callable[[dict, random.Random], dict]


def random_answer(trial: dict, rng: random.Random) -> dict:
    """A plausible random response for whatever the trial's kind is."""
    kind = TestKind(trial["test_kind"])
    if kind is TestKind.MUSHRA:
        return {"scores": {s["stimulus_id"]: rng.randint(0, 100) for s in trial["stimuli"]}}
    if kind is TestKind.HFR_GRANULAR and rng.random() < 0.5:
        markers = [m["marker_id"] for m in trial["response_schema"]["markers"]]
        picked = rng.sample(markers, k=rng.randint(1, min(3, len(markers))))
        return {"label": LABEL_TTS, "markers": picked}
    if kind is TestKind.HFR_GRANULAR:
        return {"label": LABEL_HUMAN}
    return {"label": rng.choice((LABEL_HUMAN, LABEL_TTS))}


def play_fully(service: SessionService, session_id: str, trial: dict, rng: random.Random) -> None:
    """Stream playback events covering each stimulus completely, in randomly
    sized, sometimes overlapping chunks, like a real player batching."""
    for stim in trial["stimuli"]:
        duration = stim["duration_ms"]
        cursor = 0
        while cursor < duration:
            step = rng.randint(max(1, duration // 4), duration)
            end = min(duration, cursor + step)
            start = max(0, cursor - rng.randint(0, 200))  # occasional rewind overlap
            service.record_playback(
                session_id,
                trial["trial_id"],
                [{"stimulus_id": stim["stimulus_id"], "start_ms": start, "end_ms": end}],
            )
            cursor = end


def simulate_session(
    service: SessionService,
    study_id: str,
    rater_token: str,
    rng: random.Random,
    *,
    answer: Optional[Answerer] = None,
    abandon_after: Optional[int] = None,
) -> dict:
    """Run one rater end to end; returns the completion payload, or the
    session view when the rater abandons after ``abandon_after`` trials."""
    answer = answer or random_answer
    view = service.create_session(study_id, rater_token, participant_id=f"sim-{rater_token}")
    session_id = view["session_id"]
    service.acknowledge_instructions(session_id)
    done = 0
    while True:
        payload = service.current_trial(session_id)
        if payload["completed"]:
            return service.complete_session(session_id)
        if abandon_after is not None and done >= abandon_after:
            return service.session_view(session_id)
        trial = payload["trial"]
        play_fully(service, session_id, trial, rng)
        service.submit_response(session_id, trial["trial_id"], answer(trial, rng))
        done += 1


def simulate_study(
    service: SessionService,
    study_id: str,
    seed: int,
    *,
    raters: Optional[int] = None,
    answer: Optional[Answerer] = None,
    abandon_fraction: float = 0.0,
) -> list[dict]:
    """Run every schedule slot (or the first ``raters``) through a session."""
    rng = random.Random(seed)
    slots = service.studies[study_id].schedule.rater_ids()
    if raters is not None:
        slots = slots[:raters]
    results = []
    for slot in slots:
        abandon = None
        if abandon_fraction and rng.random() < abandon_fraction:
            abandon = rng.randint(0, 2)
        results.append(
            simulate_session(
                service, study_id, slot, rng, answer=answer, abandon_after=abandon
            )
        )
    return results
