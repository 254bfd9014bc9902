"""Shared builders for synthetic ratings, studies, and services."""

from earshot.assignment import build_trial_schedule
from earshot.core import DEFAULT_MARKER_CATALOG, Origin, Stimulus, Study, TestKind
from earshot.eventlog import EventLog
from earshot.session import SessionService, StudyBundle
from earshot.stats import Rating


class FakeClock:
    """Deterministic millisecond clock advancing a fixed step per call."""

    def __init__(self, start=1_000_000, step=1_000):
        self.now = start
        self.step = step

    def __call__(self):
        self.now += self.step
        return self.now


def build_study(
    kind=TestKind.HFR,
    systems=("human", "xtts"),
    utterances=2,
    min_raters=1,
    study_id="study-1",
    seed=7,
):
    return Study(
        study_id=study_id,
        test_kind=kind,
        systems=tuple(systems),
        utterance_count=utterances,
        min_raters_per_system=min_raters,
        marker_catalog=DEFAULT_MARKER_CATALOG if kind is TestKind.HFR_GRANULAR else None,
        rng_seed=seed,
        compensation_redirect="https://crowd.example/done?cc={code}",
    )


def build_stimuli(study, duration_ms=10_000):
    out = []
    for system in study.systems:
        for u in range(study.utterance_count):
            out.append(
                Stimulus(
                    stimulus_id=f"{system}-u{u:02d}",
                    system=system,
                    utterance_id=f"u{u:02d}",
                    origin=Origin.HUMAN if system == "human" else Origin.MACHINE,
                    audio_ref=f"audio/{system}-u{u:02d}.wav",
                    duration_ms=duration_ms,
                )
            )
    return out


def build_bundle(study=None, pool=2, duration_ms=10_000, **study_kwargs):
    if study is None:
        study_kwargs.setdefault("min_raters", pool)  # every rater hears everything
        study = build_study(**study_kwargs)
    stimuli = build_stimuli(study, duration_ms=duration_ms)
    schedule = build_trial_schedule(study, stimuli, pool, seed=study.rng_seed)
    return StudyBundle.build(study, stimuli, schedule)


def build_service(bundle=None, log=None, clock=None, **service_kwargs):
    bundle = bundle or build_bundle()
    log = log if log is not None else EventLog()
    clock = clock or FakeClock()
    service = SessionService(
        {bundle.study.study_id: bundle},
        log,
        mac_key="test-key",
        clock=clock,
        **service_kwargs,
    )
    return service, bundle, log, clock


def make_rating(
    label=None,
    system="xtts",
    *,
    study_id="s1",
    rater_id="r0001",
    trial_id="t001",
    stimulus_id="stim-0",
    utterance_id="u00",
    test_kind=TestKind.HFR,
    markers=(),
    mushra_score=None,
    response_time_ms=20_000,
    decision_time_ms=2_000,
    playback_verified=True,
):
    origin = Origin.HUMAN if system == "human" else Origin.MACHINE
    return Rating(
        study_id=study_id,
        rater_id=rater_id,
        session_id=f"sess-{rater_id}",
        trial_id=trial_id,
        test_kind=test_kind,
        system=system,
        utterance_id=utterance_id,
        stimulus_id=stimulus_id,
        origin=origin,
        label=label,
        markers=frozenset(markers),
        mushra_score=mushra_score,
        response_time_ms=response_time_ms,
        decision_time_ms=decision_time_ms,
        playback_verified=playback_verified,
        served_at=1_000_000,
        responded_at=1_000_000 + response_time_ms,
    )


def binary_block(n, hits, system="xtts", *, study_id="s1", test_kind=TestKind.HFR, markers_for_tts=()):
    """n forced-choice ratings of one system, ``hits`` of them labeled human."""
    rows = []
    for i in range(n):
        label = "human" if i < hits else "tts"
        rows.append(
            make_rating(
                label,
                system,
                study_id=study_id,
                rater_id=f"r{i % 30:04d}",
                trial_id=f"{system}-{study_id}-t{i:05d}",
                stimulus_id=f"{system}-{i % 30:03d}",
                utterance_id=f"u{i % 30:02d}",
                test_kind=test_kind,
                markers=markers_for_tts if label == "tts" else (),
            )
        )
    return rows
