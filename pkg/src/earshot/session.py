"""Listener sessions: scheduled trials, gated playback, completion codes.

A session is a per-(rater, study) state machine::

    Created -> Instructed -> InTrial(k) -> AwaitingResponse(k) -> ... -> Completed -> Redeemed

InTrial(k) moves to AwaitingResponse(k) only once the server-merged playback
intervals cover the full duration of every stimulus in trial k (within a
small codec-tail tolerance).  Responses submitted earlier are rejected with
the covered milliseconds, so no response can ever be stored without verified
playback.

All state changes go through the event log: a command validates against
current state, appends one or more events, and the reducer (`_apply`) folds
them in.  Replaying the log through the same reducer reconstructs the exact
live state, which is what makes crash recovery and audit trivial.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Optional, Sequence, Union

from .assignment import TrialSchedule, TrialSpec
from .core import (
    EarshotError,
    LABEL_HUMAN,
    LABEL_TTS,
    Stimulus,
    Study,
    TestKind,
)
from .eventlog import EventLog

#: Default slack for codec tail truncation when judging full playback.
DEFAULT_COVERAGE_TOLERANCE_MS = 250

EVENT_SESSION_CREATED = "session-created"
EVENT_INSTRUCTIONS_ACK = "instructions-acknowledged"
EVENT_TRIAL_SERVED = "trial-served"
EVENT_PLAYBACK = "playback"
EVENT_RESPONSE_ACCEPTED = "response-accepted"
EVENT_SESSION_COMPLETED = "session-completed"
EVENT_CODE_ISSUED = "code-issued"


class ServiceError(EarshotError):
    status = 500
    code = "internal"

    def payload(self) -> dict:
        return {"error": self.code, "detail": str(self)}


class NotFoundError(ServiceError):
    status, code = 404, "not-found"


class ConflictError(ServiceError):
    status, code = 409, "conflict"


class ForbiddenError(ServiceError):
    status, code = 403, "forbidden"


class InvalidStateError(ServiceError):
    status, code = 409, "invalid-state"


class OutOfOrderError(ServiceError):
    status, code = 409, "out-of-order"


class ResponseSchemaError(ServiceError):
    status, code = 422, "schema-mismatch"


class IncompletePlaybackError(ServiceError):
    status, code = 412, "incomplete-playback"

    def __init__(self, message: str, covered_ms: int, required_ms: int, stimuli: dict):
        super().__init__(message)
        self.covered_ms = covered_ms
        self.required_ms = required_ms
        self.stimuli = stimuli

    def payload(self) -> dict:
        return {
            "error": self.code,
            "detail": str(self),
            "covered_ms": self.covered_ms,
            "required_ms": self.required_ms,
            "stimuli": self.stimuli,
        }


class PrematureCompletionError(ServiceError):
    status, code = 409, "trials-remaining"

    def __init__(self, remaining: int):
        plural = "" if remaining == 1 else "s"
        super().__init__(f"{remaining} trial{plural} remaining")
        self.remaining = remaining

    def payload(self) -> dict:
        return {"error": self.code, "detail": str(self), "remaining": self.remaining}


class IntervalSet:
    """Union of half-open [start, end) millisecond intervals on one audio
    timeline.  Adding only ever grows coverage (monotone)."""

    __slots__ = ("_spans",)

    def __init__(self, spans: Sequence[tuple[int, int]] = ()):
        self._spans: list[tuple[int, int]] = []
        for start, end in spans:
            self.add(start, end)

    def add(self, start: int, end: int) -> None:
        spans = self._spans + [(start, end)]
        spans.sort()
        merged = [spans[0]]
        for s, e in spans[1:]:
            last_s, last_e = merged[-1]
            if s <= last_e:
                merged[-1] = (last_s, max(last_e, e))
            else:
                merged.append((s, e))
        self._spans = merged

    @property
    def spans(self) -> tuple[tuple[int, int], ...]:
        return tuple(self._spans)

    @property
    def covered_ms(self) -> int:
        return sum(e - s for s, e in self._spans)


class SessionPhase(Enum):
    CREATED = "created"
    INSTRUCTED = "instructed"
    IN_TRIAL = "in_trial"
    AWAITING_RESPONSE = "awaiting_response"
    COMPLETED = "completed"
    REDEEMED = "redeemed"


@dataclass
class TrialState:
    spec: TrialSpec
    coverage: dict[str, IntervalSet] = field(default_factory=dict)
    entered_at: Optional[int] = None
    served_at: Optional[int] = None
    playback_complete_at: Optional[int] = None
    response: Optional[dict] = None
    ack: Optional[dict] = None


@dataclass
class SessionState:
    session_id: str
    study_id: str
    rater_id: str
    participant_id: str
    token: str
    trials: list[TrialState]
    phase: SessionPhase = SessionPhase.CREATED
    trial_index: int = 0
    created_at: int = 0
    completed_at: Optional[int] = None
    completion_code: Optional[str] = None

    @property
    def current(self) -> Optional[TrialState]:
        if self.trial_index < len(self.trials):
            return self.trials[self.trial_index]
        return None

    def responded_count(self) -> int:
        return sum(1 for t in self.trials if t.response is not None)


@dataclass(frozen=True)
class StudyBundle:
    """A study's full configuration: manifest content plus its schedule."""

    study: Study
    stimuli: Mapping[str, Stimulus]
    schedule: TrialSchedule

    def __post_init__(self):
        if self.schedule.study_id != self.study.study_id:
            raise ValueError(
                f"schedule belongs to {self.schedule.study_id!r}, not {self.study.study_id!r}"
            )

    @classmethod
    def build(cls, study: Study, stimuli: Sequence[Stimulus], schedule: TrialSchedule) -> "StudyBundle":
        return cls(study=study, stimuli={s.stimulus_id: s for s in stimuli}, schedule=schedule)


def now_ms() -> int:
    return time.time_ns() // 1_000_000


def completion_code(mac_key: Union[str, bytes], study_id: str, rater_id: str) -> str:
    """Deterministic 8-character base32 code proving session completion."""
    key = mac_key.encode() if isinstance(mac_key, str) else mac_key
    digest = hmac.new(key, f"{study_id}:{rater_id}".encode(), hashlib.sha256).digest()
    return base64.b32encode(digest).decode("ascii")[:8]


def _session_id(mac_key: Union[str, bytes], study_id: str, rater_id: str) -> str:
    key = mac_key.encode() if isinstance(mac_key, str) else mac_key
    digest = hmac.new(key, f"session:{study_id}:{rater_id}".encode(), hashlib.sha256).hexdigest()
    return f"es-{digest[:16]}"


class SessionService:
    """Transport-independent service layer; the HTTP server is a thin shim.

    Mutations are serialized under one lock (single-writer discipline); the
    constructor folds the existing log so a restart resumes exactly where
    the last acknowledged append left off.
    """

    def __init__(
        self,
        studies: Mapping[str, StudyBundle],
        log: EventLog,
        *,
        mac_key: Union[str, bytes] = "dev-key",
        clock: Callable[[], int] = now_ms,
        coverage_tolerance_ms: int = DEFAULT_COVERAGE_TOLERANCE_MS,
        min_decision_ms: int = 500,
        auto_bind: bool = True,
    ):
        self.studies = dict(studies)
        self.log = log
        self.mac_key = mac_key
        self.clock = clock
        self.coverage_tolerance_ms = coverage_tolerance_ms
        self.min_decision_ms = min_decision_ms
        self.auto_bind = auto_bind
        self._lock = threading.RLock()
        self.sessions: dict[str, SessionState] = {}
        self._by_study_token: dict[tuple[str, str], str] = {}
        self._claimed: dict[str, set[str]] = {sid: set() for sid in self.studies}
        for record in log.replay():
            self._apply(record.kind, record.payload, record.ts)

    # -- command side ---------------------------------------------------

    def _emit(self, kind: str, payload: dict, ts: int) -> None:
        self.log.append(kind, payload, ts)
        self._apply(kind, payload, ts)

    def create_session(self, study_id: str, rater_token: str, participant_id: str = "") -> dict:
        with self._lock:
            bundle = self._bundle(study_id)
            if (study_id, rater_token) in self._by_study_token:
                raise ConflictError(f"session already exists for rater {rater_token!r} in {study_id!r}")
            slots = bundle.schedule.rater_ids()
            claimed = self._claimed[study_id]
            if rater_token in bundle.schedule.raters:
                if rater_token in claimed:
                    raise ConflictError(f"schedule slot {rater_token!r} already claimed")
                slot = rater_token
            elif self.auto_bind:
                free = [s for s in slots if s not in claimed]
                if not free:
                    raise ForbiddenError(f"no schedule slot left for rater {rater_token!r}")
                slot = free[0]
            else:
                raise ForbiddenError(f"rater {rater_token!r} is not assigned in the schedule")
            ts = self.clock()
            payload = {
                "session_id": _session_id(self.mac_key, study_id, slot),
                "study_id": study_id,
                "rater_id": slot,
                "participant_id": participant_id,
                "token": rater_token,
            }
            self._emit(EVENT_SESSION_CREATED, payload, ts)
            return self.session_view(payload["session_id"])

    def acknowledge_instructions(self, session_id: str) -> dict:
        with self._lock:
            sess = self._session(session_id)
            if sess.phase is SessionPhase.CREATED:
                self._emit(EVENT_INSTRUCTIONS_ACK, {"session_id": session_id}, self.clock())
            return self.session_view(session_id)

    def current_trial(self, session_id: str) -> dict:
        """Serve the rater's next trial, recording first presentation time."""
        with self._lock:
            sess = self._session(session_id)
            if sess.phase is SessionPhase.CREATED:
                raise InvalidStateError("instructions not acknowledged yet")
            if sess.phase in (SessionPhase.COMPLETED, SessionPhase.REDEEMED):
                return {"session_id": session_id, "completed": True, "trial": None}
            trial = sess.current
            if sess.phase is SessionPhase.INSTRUCTED or trial.served_at is None:
                self._emit(
                    EVENT_TRIAL_SERVED,
                    {"session_id": session_id, "trial_id": trial.spec.trial_id},
                    self.clock(),
                )
            return self._trial_payload(sess)

    def record_playback(self, session_id: str, trial_id: str, events: Sequence[dict]) -> dict:
        with self._lock:
            sess = self._session(session_id)
            trial = self._current_served_trial(sess, trial_id)
            bundle = self._bundle(sess.study_id)
            accepted, rejected = [], []
            for i, ev in enumerate(events):
                span, reason = self._check_playback_event(ev, trial.spec, bundle)
                if span is None:
                    rejected.append({"index": i, "reason": reason})
                else:
                    accepted.append(span)
            if accepted:
                self._emit(
                    EVENT_PLAYBACK,
                    {"session_id": session_id, "trial_id": trial_id, "spans": accepted},
                    self.clock(),
                )
            status = self._coverage_status(sess, trial)
            status["rejected"] = rejected
            return status

    def submit_response(self, session_id: str, trial_id: str, payload: dict) -> dict:
        with self._lock:
            sess = self._session(session_id)
            bundle = self._bundle(sess.study_id)
            by_id = {t.spec.trial_id: t for t in sess.trials}
            if trial_id not in by_id:
                raise NotFoundError(f"trial {trial_id!r} is not in this session")
            target = by_id[trial_id]
            if target.response is not None:
                return target.ack  # idempotent duplicate replay
            if sess.phase in (SessionPhase.CREATED, SessionPhase.INSTRUCTED):
                raise InvalidStateError("no trial in progress")
            trial = sess.current
            if trial is None or trial.spec.trial_id != trial_id:
                raise OutOfOrderError(f"trial {trial_id!r} is not the current trial")
            if sess.phase is not SessionPhase.AWAITING_RESPONSE:
                status = self._coverage_status(sess, trial)
                raise IncompletePlaybackError(
                    f"playback incomplete: covered {status['covered_ms']} of {status['required_ms']} ms",
                    covered_ms=status["covered_ms"],
                    required_ms=status["required_ms"],
                    stimuli=status["stimuli"],
                )
            normalized = validate_response_payload(payload, bundle.study, trial.spec)
            ts = self.clock()
            event = {
                "session_id": session_id,
                "trial_id": trial_id,
                "response": normalized,
                "served_at": trial.served_at,
                "responded_at": ts,
                "response_time_ms": ts - trial.served_at,
                "decision_time_ms": ts - trial.playback_complete_at,
            }
            self._emit(EVENT_RESPONSE_ACCEPTED, event, ts)
            if sess.phase is SessionPhase.COMPLETED:
                self._emit(EVENT_SESSION_COMPLETED, {"session_id": session_id}, ts)
            return target.ack

    def complete_session(self, session_id: str) -> dict:
        with self._lock:
            sess = self._session(session_id)
            if sess.phase is SessionPhase.REDEEMED:
                pass  # idempotent: same code again
            elif sess.phase is SessionPhase.COMPLETED:
                code = completion_code(self.mac_key, sess.study_id, sess.rater_id)
                self._emit(EVENT_CODE_ISSUED, {"session_id": session_id, "code": code}, self.clock())
            else:
                raise PrematureCompletionError(len(sess.trials) - sess.responded_count())
            study = self._bundle(sess.study_id).study
            redirect = study.compensation_redirect.replace("{code}", sess.completion_code) or None
            return {
                "session_id": session_id,
                "completion_code": sess.completion_code,
                "redirect_url": redirect,
            }

    # -- query side -------------------------------------------------------

    def session_view(self, session_id: str) -> dict:
        sess = self._session(session_id)
        study = self._bundle(sess.study_id).study
        return {
            "session_id": sess.session_id,
            "study_id": sess.study_id,
            "rater_id": sess.rater_id,
            "phase": sess.phase.value,
            "trial_count": len(sess.trials),
            "responded": sess.responded_count(),
            "instructions": {
                "cue_list": list(study.instructions),
                "test_kind": study.test_kind.value,
            },
        }

    def study_progress(self, study_id: str) -> dict:
        with self._lock:
            bundle = self._bundle(study_id)
            study = bundle.study
            funnel = {"created": 0, "in_progress": 0, "completed": 0, "redeemed": 0}
            per_system = {sys: 0 for sys in study.systems}
            responses = 0
            rushed = 0
            for sess in self.sessions.values():
                if sess.study_id != study_id:
                    continue
                funnel["created"] += 1
                if sess.phase in (SessionPhase.COMPLETED, SessionPhase.REDEEMED):
                    funnel["completed"] += 1
                    if sess.phase is SessionPhase.REDEEMED:
                        funnel["redeemed"] += 1
                else:
                    funnel["in_progress"] += 1
                for trial in sess.trials:
                    if trial.response is None:
                        continue
                    responses += 1
                    if trial.response["decision_time_ms"] < self.min_decision_ms:
                        rushed += 1
                    for sid in trial.spec.stimulus_ids:
                        per_system[bundle.stimuli[sid].system] += 1
            target = study.min_raters_per_system * study.utterance_count
            return {
                "study_id": study_id,
                "systems": {
                    sys: {"collected": count, "target": target}
                    for sys, count in sorted(per_system.items())
                },
                "sessions": funnel,
                "rush": {
                    "flagged": rushed,
                    "responses": responses,
                    "rate_pct": (100.0 * rushed / responses) if responses else 0.0,
                },
            }

    def state_snapshot(self) -> dict:
        """Canonical, JSON-stable dump of every session; used to prove that
        replaying the log reconstructs the live state exactly."""
        out = {}
        for sid in sorted(self.sessions):
            sess = self.sessions[sid]
            out[sid] = {
                "study_id": sess.study_id,
                "rater_id": sess.rater_id,
                "participant_id": sess.participant_id,
                "token": sess.token,
                "phase": sess.phase.value,
                "trial_index": sess.trial_index,
                "created_at": sess.created_at,
                "completed_at": sess.completed_at,
                "completion_code": sess.completion_code,
                "trials": [
                    {
                        "trial_id": t.spec.trial_id,
                        "coverage": {k: list(v.spans) for k, v in sorted(t.coverage.items())},
                        "entered_at": t.entered_at,
                        "served_at": t.served_at,
                        "playback_complete_at": t.playback_complete_at,
                        "response": t.response,
                        "ack": t.ack,
                    }
                    for t in sess.trials
                ],
            }
        return out

    # -- internals ----------------------------------------------------------

    def _bundle(self, study_id: str) -> StudyBundle:
        try:
            return self.studies[study_id]
        except KeyError:
            raise NotFoundError(f"unknown study {study_id!r}") from None

    def _session(self, session_id: str) -> SessionState:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise NotFoundError(f"unknown session {session_id!r}") from None

    def _current_served_trial(self, sess: SessionState, trial_id: str) -> TrialState:
        if sess.phase not in (SessionPhase.IN_TRIAL, SessionPhase.AWAITING_RESPONSE):
            raise InvalidStateError(f"session is {sess.phase.value}, no active trial")
        trial = sess.current
        if trial.spec.trial_id != trial_id:
            raise OutOfOrderError(
                f"trial {trial_id!r} is not the current trial ({trial.spec.trial_id!r})"
            )
        if trial.served_at is None:
            raise OutOfOrderError(f"trial {trial_id!r} has not been served yet")
        return trial

    def _check_playback_event(self, ev: dict, spec: TrialSpec, bundle: StudyBundle):
        if not isinstance(ev, dict):
            return None, "event is not an object"
        rate = ev.get("playback_rate", 1.0)
        if rate != 1.0:
            return None, f"playback_rate {rate} rejected; only 1.0 is allowed"
        if len(spec.stimulus_ids) == 1:
            stimulus_id = ev.get("stimulus_id", spec.stimulus_ids[0])
        else:
            stimulus_id = ev.get("stimulus_id")
        if stimulus_id not in spec.stimulus_ids:
            return None, f"stimulus {stimulus_id!r} is not part of this trial"
        start, end = ev.get("start_ms"), ev.get("end_ms")
        if not (isinstance(start, int) and isinstance(end, int)):
            return None, "start_ms/end_ms must be integers"
        duration = bundle.stimuli[stimulus_id].duration_ms
        if not (0 <= start < end <= duration):
            return None, f"interval [{start},{end}) outside [0,{duration})"
        span = {"stimulus_id": stimulus_id, "start_ms": start, "end_ms": end}
        if "client_ts" in ev:
            span["client_ts"] = ev["client_ts"]
        return span, None

    def _coverage_status(self, sess: SessionState, trial: TrialState) -> dict:
        bundle = self._bundle(sess.study_id)
        stimuli = {}
        covered_total = 0
        required_total = 0
        all_complete = True
        for sid in trial.spec.stimulus_ids:
            duration = bundle.stimuli[sid].duration_ms
            covered = trial.coverage.get(sid, IntervalSet()).covered_ms
            required = max(0, duration - self.coverage_tolerance_ms)
            complete = covered >= required
            stimuli[sid] = {
                "covered_ms": covered,
                "duration_ms": duration,
                "complete": complete,
            }
            covered_total += covered
            required_total += required
            all_complete = all_complete and complete
        return {
            "session_id": sess.session_id,
            "trial_id": trial.spec.trial_id,
            "covered_ms": covered_total,
            "required_ms": required_total,
            "complete": all_complete,
            "stimuli": stimuli,
        }

    def _trial_payload(self, sess: SessionState) -> dict:
        bundle = self._bundle(sess.study_id)
        trial = sess.current
        study = bundle.study
        schema: dict = {}
        if study.test_kind.is_binary:
            schema["labels"] = [LABEL_HUMAN, LABEL_TTS]
        if study.test_kind is TestKind.HFR_GRANULAR:
            schema["markers"] = [
                {"marker_id": m.marker_id, "display": m.display}
                for m in study.marker_catalog.markers
            ]
        if study.test_kind is TestKind.MUSHRA:
            schema["score_range"] = [0, 100]
        return {
            "session_id": sess.session_id,
            "completed": False,
            "trial": {
                "trial_id": trial.spec.trial_id,
                "index": sess.trial_index + 1,
                "total": len(sess.trials),
                "test_kind": study.test_kind.value,
                "stimuli": [
                    {
                        "stimulus_id": sid,
                        "audio_url": f"/v1/stimuli/{sid}/audio",
                        "duration_ms": bundle.stimuli[sid].duration_ms,
                    }
                    for sid in trial.spec.stimulus_ids
                ],
                "coverage_tolerance_ms": self.coverage_tolerance_ms,
                "response_schema": schema,
            },
        }

    # -- reducer ------------------------------------------------------------

    def _apply(self, kind: str, payload: dict, ts: int) -> None:
        if kind == EVENT_SESSION_CREATED:
            bundle = self.studies[payload["study_id"]]
            trials = [TrialState(spec=spec) for spec in bundle.schedule.raters[payload["rater_id"]]]
            sess = SessionState(
                session_id=payload["session_id"],
                study_id=payload["study_id"],
                rater_id=payload["rater_id"],
                participant_id=payload.get("participant_id", ""),
                token=payload["token"],
                trials=trials,
                created_at=ts,
            )
            self.sessions[sess.session_id] = sess
            self._by_study_token[(sess.study_id, sess.token)] = sess.session_id
            self._claimed.setdefault(sess.study_id, set()).add(sess.rater_id)
            return
        sess = self.sessions[payload["session_id"]]
        if kind == EVENT_INSTRUCTIONS_ACK:
            sess.phase = SessionPhase.INSTRUCTED
        elif kind == EVENT_TRIAL_SERVED:
            trial = sess.current
            if sess.phase is SessionPhase.INSTRUCTED:
                sess.phase = SessionPhase.IN_TRIAL
            if trial.entered_at is None:
                trial.entered_at = ts
            if trial.served_at is None:
                trial.served_at = ts
        elif kind == EVENT_PLAYBACK:
            trial = sess.current
            for span in payload["spans"]:
                trial.coverage.setdefault(span["stimulus_id"], IntervalSet()).add(
                    span["start_ms"], span["end_ms"]
                )
            if sess.phase is SessionPhase.IN_TRIAL and self._coverage_status(sess, trial)["complete"]:
                sess.phase = SessionPhase.AWAITING_RESPONSE
                trial.playback_complete_at = ts
        elif kind == EVENT_RESPONSE_ACCEPTED:
            trial = sess.current
            trial.response = {
                **payload["response"],
                "served_at": payload["served_at"],
                "responded_at": payload["responded_at"],
                "response_time_ms": payload["response_time_ms"],
                "decision_time_ms": payload["decision_time_ms"],
            }
            sess.trial_index += 1
            if sess.trial_index < len(sess.trials):
                sess.phase = SessionPhase.IN_TRIAL
                next_trial = sess.current
                if next_trial.entered_at is None:
                    next_trial.entered_at = ts
                next_id = next_trial.spec.trial_id
            else:
                sess.phase = SessionPhase.COMPLETED
                sess.completed_at = ts
                next_id = None
            trial.ack = {
                "status": "accepted",
                "session_id": sess.session_id,
                "trial_id": trial.spec.trial_id,
                "response_time_ms": payload["response_time_ms"],
                "next_trial_id": next_id,
                "completed": next_id is None,
                "remaining": len(sess.trials) - sess.trial_index,
            }
        elif kind == EVENT_SESSION_COMPLETED:
            sess.completed_at = ts if sess.completed_at is None else sess.completed_at
        elif kind == EVENT_CODE_ISSUED:
            sess.completion_code = payload["code"]
            sess.phase = SessionPhase.REDEEMED


def validate_response_payload(payload: dict, study: Study, spec: TrialSpec) -> dict:
    """Check a submitted response against the study's test kind and trial.

    Returns the normalized response dict; raises
    :class:`ResponseSchemaError` on any mismatch.
    """
    if not isinstance(payload, dict):
        raise ResponseSchemaError("response payload must be an object")
    kind = study.test_kind
    if kind.is_binary:
        allowed = {"label", "markers"} if kind is TestKind.HFR_GRANULAR else {"label"}
        extra = set(payload) - allowed
        if extra:
            raise ResponseSchemaError(f"unexpected fields {sorted(extra)} for a {kind.value} response")
        label = payload.get("label")
        if label not in (LABEL_HUMAN, LABEL_TTS):
            raise ResponseSchemaError(f"label must be '{LABEL_HUMAN}' or '{LABEL_TTS}', got {label!r}")
        markers = payload.get("markers") or []
        if kind is TestKind.HFR_GRANULAR:
            if not isinstance(markers, (list, tuple)) or not all(isinstance(m, str) for m in markers):
                raise ResponseSchemaError("markers must be a list of marker ids")
            unknown = [m for m in markers if m not in study.marker_catalog]
            if unknown:
                raise ResponseSchemaError(f"markers {unknown} are not in the study catalog")
            if label == LABEL_TTS and not markers:
                raise ResponseSchemaError("a tts judgment must select at least one marker")
            if label == LABEL_HUMAN and markers:
                raise ResponseSchemaError("a human judgment cannot carry markers")
            return {"label": label, "markers": sorted(set(markers))}
        if payload.get("markers"):
            raise ResponseSchemaError("markers are not part of a plain HFR response")
        return {"label": label}
    # MUSHRA
    extra = set(payload) - {"scores"}
    if extra:
        raise ResponseSchemaError(f"unexpected fields {sorted(extra)} for a MUSHRA response")
    scores = payload.get("scores")
    if not isinstance(scores, dict):
        raise ResponseSchemaError("scores must map stimulus_id to an integer 0..100")
    expected = set(spec.stimulus_ids)
    if set(scores) != expected:
        raise ResponseSchemaError(
            f"scores must cover exactly the trial's stimuli {sorted(expected)}"
        )
    for sid, value in scores.items():
        if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= 100:
            raise ResponseSchemaError(f"score for {sid!r} must be an integer in [0,100], got {value!r}")
    return {"scores": {sid: scores[sid] for sid in sorted(scores)}}
