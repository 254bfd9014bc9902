"""Domain types and study-manifest validation.

A study manifest is a single self-contained JSON document with two top-level
keys, ``study`` and ``stimuli``.  Everything downstream (scheduling, the
session service, the statistics engine) consumes the types defined here.

Validation never raises for bad content: violations are data, collected into
a :class:`ValidationReport`.  Only an unreadable file or malformed JSON is an
error (:class:`ManifestParseError`, which names the byte offset).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Union


class EarshotError(Exception):
    """Base class for all package errors."""


class ManifestParseError(EarshotError):
    """Manifest file is unreadable or not valid JSON.

    ``byte_offset`` points at the first offending byte, or None when the
    file itself could not be read.
    """

    def __init__(self, message: str, byte_offset: Optional[int] = None):
        super().__init__(message)
        self.byte_offset = byte_offset


class NoDataError(EarshotError):
    """A statistic was requested over an empty set; never reported as zero."""


class KindMismatchError(EarshotError):
    """Responses of the wrong test kind reached a statistic."""


class TestKind(str, Enum):
    """The three test protocols a study can run.

    Exactly one kind per study; the kind fixes the response schema for
    every trial in that study.
    """

    __test__ = False  # keep pytest collection away from the Test* name

    HFR = "HFR"
    HFR_GRANULAR = "HFR_GRANULAR"
    MUSHRA = "MUSHRA"

    @property
    def is_binary(self) -> bool:
        """True for the forced-choice kinds (plain and granular HFR)."""
        return self in (TestKind.HFR, TestKind.HFR_GRANULAR)


class Origin(str, Enum):
    """Ground-truth provenance of a stimulus."""

    HUMAN = "human"
    MACHINE = "machine"


#: Reserved system label for genuine human recordings.
HUMAN_SYSTEM = "human"

#: The two admissible labels in a forced-choice response.
LABEL_HUMAN = "human"
LABEL_TTS = "tts"


@dataclass(frozen=True)
class MarkerDef:
    marker_id: str
    display: str


@dataclass(frozen=True)
class MarkerCatalog:
    """Ordered list of perceptual-flaw markers raters can select.

    The default catalog carries the nine standard markers; marker ids must
    be unique within a catalog.
    """

    markers: tuple[MarkerDef, ...]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(m.marker_id for m in self.markers)

    def __len__(self) -> int:
        return len(self.markers)

    def __contains__(self, marker_id: str) -> bool:
        return marker_id in self.ids

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "MarkerCatalog":
        return cls(tuple(MarkerDef(mid, disp) for mid, disp in pairs))


DEFAULT_MARKER_CATALOG = MarkerCatalog.from_pairs(
    [
        ("digital_voice", "Voice quality is digital"),
        ("unnatural_pauses", "Unnatural pauses"),
        ("unnatural_pitch", "Unnatural pitch"),
        ("flat_monotonic", "Flat or monotonic delivery"),
        ("inappropriate_emotion", "Inappropriate emotion"),
        ("no_human_quirks", "No human quirks"),
        ("mispronunciations", "Mispronunciations"),
        ("word_skips_repeats", "Word skips or repeats"),
        ("digital_artifacts", "Digital artifacts"),
    ]
)

#: Perceptual cues shown on the instruction screen before a session starts.
DEFAULT_CUE_LIST = (
    "voice quality (e.g. robotic or compressed sound)",
    "unnatural modulation",
    "monotonic delivery",
    "inappropriate emotion or intonation",
    "mispronunciations",
    "skipped or repeated words",
    "unnatural pauses or speed",
    "digital artifacts",
)


@dataclass(frozen=True)
class Study:
    """A configured experiment.

    ``systems`` must include the reserved label ``human`` whenever human
    reference stimuli are present; ``marker_catalog`` is carried iff the
    study kind is HFR_GRANULAR.
    """

    study_id: str
    test_kind: TestKind
    systems: tuple[str, ...]
    utterance_count: int
    min_raters_per_system: int = 30
    marker_catalog: Optional[MarkerCatalog] = None
    rng_seed: int = 0
    compensation_redirect: str = ""
    instructions: tuple[str, ...] = DEFAULT_CUE_LIST

    @classmethod
    def from_dict(cls, d: dict) -> "Study":
        catalog = None
        if d.get("marker_catalog") is not None:
            catalog = MarkerCatalog.from_pairs(
                (m["marker_id"], m["display"]) for m in d["marker_catalog"]
            )
        return cls(
            study_id=d["study_id"],
            test_kind=TestKind(d["test_kind"]),
            systems=tuple(d["systems"]),
            utterance_count=d["utterance_count"],
            min_raters_per_system=d.get("min_raters_per_system", 30),
            marker_catalog=catalog,
            rng_seed=d.get("rng_seed", 0),
            compensation_redirect=d.get("compensation_redirect", ""),
            instructions=tuple(d.get("instructions", DEFAULT_CUE_LIST)),
        )

    def to_dict(self) -> dict:
        d = {
            "study_id": self.study_id,
            "test_kind": self.test_kind.value,
            "systems": list(self.systems),
            "utterance_count": self.utterance_count,
            "min_raters_per_system": self.min_raters_per_system,
            "rng_seed": self.rng_seed,
            "compensation_redirect": self.compensation_redirect,
            "instructions": list(self.instructions),
        }
        if self.marker_catalog is not None:
            d["marker_catalog"] = [
                {"marker_id": m.marker_id, "display": m.display}
                for m in self.marker_catalog.markers
            ]
        return d


@dataclass(frozen=True)
class Stimulus:
    """One audio item under test."""

    stimulus_id: str
    system: str
    utterance_id: str
    origin: Origin
    audio_ref: str
    duration_ms: int
    prompt_utterance_id: Optional[str] = None

    @classmethod
    def from_dict(cls, d: dict) -> "Stimulus":
        return cls(
            stimulus_id=d["stimulus_id"],
            system=d["system"],
            utterance_id=d["utterance_id"],
            origin=Origin(d["origin"]),
            audio_ref=d["audio_ref"],
            duration_ms=d["duration_ms"],
            prompt_utterance_id=d.get("prompt_utterance_id"),
        )

    def to_dict(self) -> dict:
        d = {
            "stimulus_id": self.stimulus_id,
            "system": self.system,
            "utterance_id": self.utterance_id,
            "origin": self.origin.value,
            "audio_ref": self.audio_ref,
            "duration_ms": self.duration_ms,
        }
        if self.prompt_utterance_id is not None:
            d["prompt_utterance_id"] = self.prompt_utterance_id
        return d


@dataclass(frozen=True)
class Response:
    """One rater judgment for one trial.

    ``label`` is present iff the study kind is forced-choice; ``scores``
    maps stimulus_id to an integer 0..100 iff the kind is MUSHRA.  Only
    responses with ``playback_verified`` enter any statistic.
    """

    rater_id: str
    trial_id: str
    label: Optional[str] = None
    markers: frozenset[str] = frozenset()
    scores: Optional[dict[str, int]] = None
    response_time_ms: int = 0
    playback_verified: bool = False


@dataclass(frozen=True)
class HfrResult:
    """Point estimate of a fooling rate with its confidence interval."""

    estimate_pct: float
    n: int
    ci_low_pct: float
    ci_high_pct: float


SEVERITY_ERROR = "ERROR"


@dataclass(frozen=True)
class Violation:
    severity: str
    code: str
    context: str

    def render(self) -> str:
        return f"{self.severity}\t{self.code}\t{self.context}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def render(self) -> str:
        return "\n".join(v.render() for v in self.violations)

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


def _err(code: str, context: str) -> Violation:
    return Violation(SEVERITY_ERROR, code, context)


def validate_manifest(study: Study, stimuli: list[Stimulus]) -> ValidationReport:
    """Check every study and stimulus invariant; empty report means valid.

    Idempotent and order-insensitive: permuting ``stimuli`` yields the same
    violation multiset.  A manifest this function accepts never trips a
    scheduling precondition downstream.
    """
    out: list[Violation] = []

    if study.utterance_count < 1:
        out.append(_err("bad-utterance-count", f"utterance_count={study.utterance_count}"))
    if study.min_raters_per_system < 1:
        out.append(_err("bad-min-raters", f"min_raters_per_system={study.min_raters_per_system}"))
    if not (0 <= study.rng_seed < 2**64):
        out.append(_err("bad-rng-seed", f"rng_seed={study.rng_seed} outside 64-bit unsigned range"))

    seen_systems: set[str] = set()
    for sys_label in study.systems:
        if not sys_label:
            out.append(_err("empty-system-label", "systems contains an empty label"))
        if sys_label in seen_systems:
            out.append(_err("duplicate-system", f"system={sys_label!r}"))
        seen_systems.add(sys_label)

    if study.test_kind is TestKind.HFR_GRANULAR:
        if study.marker_catalog is None:
            out.append(_err("marker-catalog-missing", "HFR_GRANULAR study carries no marker catalog"))
        elif len(study.marker_catalog) < 1:
            out.append(_err("marker-catalog-empty", "marker catalog has no markers"))
    elif study.marker_catalog is not None:
        out.append(
            _err("marker-catalog-unexpected", f"test_kind={study.test_kind.value} carries a marker catalog")
        )
    if study.marker_catalog is not None:
        seen_markers: set[str] = set()
        for m in study.marker_catalog.markers:
            if m.marker_id in seen_markers:
                out.append(_err("duplicate-marker-id", f"marker_id={m.marker_id!r}"))
            seen_markers.add(m.marker_id)

    declared = set(study.systems)
    seen_stimulus_ids: set[str] = set()
    per_system_counts: dict[str, int] = {s: 0 for s in study.systems}
    for st in stimuli:
        ctx = f"stimulus_id={st.stimulus_id!r}"
        if st.stimulus_id in seen_stimulus_ids:
            out.append(_err("duplicate-stimulus-id", ctx))
        seen_stimulus_ids.add(st.stimulus_id)
        if st.system not in declared:
            out.append(_err("unknown-system", f"{ctx} system={st.system!r}"))
        else:
            per_system_counts[st.system] += 1
        if (st.origin is Origin.HUMAN) != (st.system == HUMAN_SYSTEM):
            out.append(_err("origin-system-mismatch", f"{ctx} origin={st.origin.value} system={st.system!r}"))
        if st.duration_ms <= 0:
            out.append(_err("bad-duration", f"{ctx} duration_ms={st.duration_ms}"))
        if st.prompt_utterance_id is not None and st.prompt_utterance_id == st.utterance_id:
            out.append(_err("prompt-equals-target", f"{ctx} utterance_id={st.utterance_id!r}"))

    for sys_label in study.systems:
        count = per_system_counts.get(sys_label, 0)
        if count < study.utterance_count:
            out.append(
                _err(
                    "missing-stimuli-for-system",
                    f"system={sys_label!r} has {count} stimuli, needs >= {study.utterance_count}",
                )
            )

    return ValidationReport(tuple(out))


# --- manifest document handling -------------------------------------------

_STUDY_FIELDS = {
    "study_id": str,
    "test_kind": str,
    "systems": list,
    "utterance_count": int,
    "min_raters_per_system": int,
    "rng_seed": int,
    "compensation_redirect": str,
    "marker_catalog": list,
    "instructions": list,
}
_STUDY_REQUIRED = ("study_id", "test_kind", "systems", "utterance_count")

_STIMULUS_FIELDS = {
    "stimulus_id": str,
    "system": str,
    "utterance_id": str,
    "origin": str,
    "audio_ref": str,
    "duration_ms": int,
    "prompt_utterance_id": str,
}
_STIMULUS_REQUIRED = ("stimulus_id", "system", "utterance_id", "origin", "audio_ref", "duration_ms")


def _check_fields(obj: dict, schema: dict, required: tuple, where: str, out: list[Violation]) -> bool:
    ok = True
    for key in required:
        if key not in obj:
            out.append(_err("missing-key", f"{where} lacks {key!r}"))
            ok = False
    for key, typ in schema.items():
        if key in obj and obj[key] is not None:
            val = obj[key]
            # bool is an int subclass but never a valid manifest number
            if not isinstance(val, typ) or (typ is int and isinstance(val, bool)):
                out.append(_err("bad-type", f"{where} field {key!r} should be {typ.__name__}"))
                ok = False
    return ok


def validate_manifest_doc(doc: dict) -> ValidationReport:
    """Validate a raw manifest dict: structure first, then semantics."""
    out: list[Violation] = []
    if not isinstance(doc, dict):
        return ValidationReport((_err("bad-type", "manifest root is not an object"),))
    for key in ("study", "stimuli"):
        if key not in doc:
            out.append(_err("missing-key", f"manifest lacks top-level {key!r}"))
    if out:
        return ValidationReport(tuple(out))

    study_doc, stimuli_doc = doc["study"], doc["stimuli"]
    structural_ok = isinstance(study_doc, dict) and isinstance(stimuli_doc, list)
    if not isinstance(study_doc, dict):
        out.append(_err("bad-type", "manifest 'study' is not an object"))
    if not isinstance(stimuli_doc, list):
        out.append(_err("bad-type", "manifest 'stimuli' is not a list"))
    if not structural_ok:
        return ValidationReport(tuple(out))

    structural_ok &= _check_fields(study_doc, _STUDY_FIELDS, _STUDY_REQUIRED, "study", out)
    if "test_kind" in study_doc and study_doc["test_kind"] not in TestKind._value2member_map_:
        out.append(_err("bad-test-kind", f"test_kind={study_doc.get('test_kind')!r}"))
        structural_ok = False
    if study_doc.get("marker_catalog") is not None:
        for i, m in enumerate(study_doc["marker_catalog"]):
            if not (isinstance(m, dict) and isinstance(m.get("marker_id"), str) and isinstance(m.get("display"), str)):
                out.append(_err("bad-type", f"study marker_catalog[{i}] needs marker_id and display strings"))
                structural_ok = False

    for i, st in enumerate(stimuli_doc):
        where = f"stimuli[{i}]"
        if not isinstance(st, dict):
            out.append(_err("bad-type", f"{where} is not an object"))
            structural_ok = False
            continue
        structural_ok &= _check_fields(st, _STIMULUS_FIELDS, _STIMULUS_REQUIRED, where, out)
        if "origin" in st and st.get("origin") not in (Origin.HUMAN.value, Origin.MACHINE.value):
            out.append(_err("bad-origin", f"{where} origin={st.get('origin')!r}"))
            structural_ok = False

    if not structural_ok:
        return ValidationReport(tuple(out))

    study = Study.from_dict(study_doc)
    stimuli = [Stimulus.from_dict(st) for st in stimuli_doc]
    semantic = validate_manifest(study, stimuli)
    return ValidationReport(tuple(out) + semantic.violations)


def parse_manifest(data: Union[str, bytes]) -> dict:
    """Decode manifest JSON, raising :class:`ManifestParseError` with the
    byte offset of the first problem."""
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ManifestParseError(f"manifest is not UTF-8 at byte {e.start}", e.start) from e
    else:
        text = data
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        byte_offset = len(text[: e.pos].encode("utf-8"))
        raise ManifestParseError(f"manifest JSON invalid at byte {byte_offset}: {e.msg}", byte_offset) from e


def load_manifest(path: Union[str, Path]) -> tuple[Study, list[Stimulus], ValidationReport]:
    """Read and parse a manifest file.

    Returns the typed study and stimuli together with the validation report;
    when the report is not ok the typed objects are still returned whenever
    the document was structurally sound enough to build them, otherwise
    (structural damage) a report alone comes back with ``study=None``.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise ManifestParseError(f"cannot read manifest {path}: {e}") from e
    doc = parse_manifest(raw)
    report = validate_manifest_doc(doc)
    if any(v.code in ("missing-key", "bad-type", "bad-test-kind", "bad-origin") for v in report.violations):
        return None, [], report  # type: ignore[return-value]
    study = Study.from_dict(doc["study"])
    stimuli = [Stimulus.from_dict(st) for st in doc["stimuli"]]
    return study, stimuli, report


def dump_manifest(study: Study, stimuli: Iterable[Stimulus]) -> str:
    doc = {"study": study.to_dict(), "stimuli": [s.to_dict() for s in stimuli]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
