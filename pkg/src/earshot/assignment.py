"""Deterministic trial scheduling with coverage, balance, and anti-streak order.

The scheduler turns a validated manifest into per-rater trial lists such that

* every stimulus is heard by at least ``min_raters_per_system`` distinct raters,
* no rater hears the same stimulus twice,
* per-rater trial counts differ by at most one across the pool,
* within one rater, consecutive trials never share a system when avoidable.

For forced-choice kinds each trial presents one stimulus.  The optional
``one_per_utterance`` cap additionally limits a rater to a single rendition
of any utterance text (hearing two renditions invites memory-based
comparison instead of an absolute judgment) at the cost of a much larger
rater pool.  MUSHRA bundles all systems' renditions of an utterance into a
single multi-stimulus trial, so the cap is inherent there.

Everything is a pure function of (study, stimuli, pool size, seed): the same
inputs always serialize to byte-identical schedule documents.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from typing import Optional, Sequence

from .core import EarshotError, Stimulus, Study, TestKind


class SizingError(EarshotError):
    """The rater pool cannot satisfy coverage; reports the minimum that can."""

    def __init__(self, pool: int, minimum_feasible: int):
        super().__init__(
            f"pool of {pool} raters cannot satisfy coverage; minimum feasible pool = {minimum_feasible}"
        )
        self.pool = pool
        self.minimum_feasible = minimum_feasible


class UnknownRaterError(EarshotError, KeyError):
    def __init__(self, rater_id: str):
        super().__init__(f"rater {rater_id!r} is not in the schedule")
        self.rater_id = rater_id


@dataclass(frozen=True)
class TrialSpec:
    """One scheduled trial: a singleton stimulus for forced-choice kinds,
    the full per-utterance stimulus set for MUSHRA."""

    trial_id: str
    stimulus_ids: tuple[str, ...]


@dataclass(frozen=True)
class TrialSchedule:
    study_id: str
    seed: int
    pool: int
    raters: dict[str, tuple[TrialSpec, ...]]

    def rater_ids(self) -> list[str]:
        return sorted(self.raters)

    def to_json(self) -> str:
        doc = {
            "study_id": self.study_id,
            "seed": self.seed,
            "pool": self.pool,
            "raters": {
                rid: [
                    {"trial_id": t.trial_id, "stimulus_ids": list(t.stimulus_ids)}
                    for t in trials
                ]
                for rid, trials in self.raters.items()
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TrialSchedule":
        doc = json.loads(text)
        raters = {
            rid: tuple(TrialSpec(t["trial_id"], tuple(t["stimulus_ids"])) for t in trials)
            for rid, trials in doc["raters"].items()
        }
        return cls(study_id=doc["study_id"], seed=doc["seed"], pool=doc["pool"], raters=raters)


def _derived_rng(seed: int, *labels: object) -> random.Random:
    # stable sub-stream derivation: hash the seed together with a label path
    material = ":".join([str(seed), *map(str, labels)]).encode()
    digest = hashlib.sha256(material).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _trial_units(study: Study, stimuli: Sequence[Stimulus]) -> list[tuple[str, tuple[Stimulus, ...]]]:
    """Group stimuli into trial units keyed by utterance.

    Forced-choice: one unit per stimulus.  MUSHRA: one unit per utterance
    holding every system's rendition (the hidden reference among them).
    Returns (utterance_id, stimuli) pairs in deterministic order.
    """
    if study.test_kind is TestKind.MUSHRA:
        by_utt: dict[str, list[Stimulus]] = {}
        for st in stimuli:
            by_utt.setdefault(st.utterance_id, []).append(st)
        return [
            (utt, tuple(sorted(group, key=lambda s: s.stimulus_id)))
            for utt, group in sorted(by_utt.items())
        ]
    return [(st.utterance_id, (st,)) for st in sorted(stimuli, key=lambda s: s.stimulus_id)]


def minimum_feasible_pool(
    study: Study, stimuli: Sequence[Stimulus], *, one_per_utterance: bool = False
) -> int:
    """Smallest rater pool that can satisfy coverage under the rater caps."""
    cap = _effective_cap(study, one_per_utterance)
    units = _trial_units(study, stimuli)
    need = study.min_raters_per_system
    if not units:
        return need
    if cap:
        per_utt: dict[str, int] = {}
        for utt, _ in units:
            per_utt[utt] = per_utt.get(utt, 0) + 1
        return max(need * k for k in per_utt.values())
    return need


def _effective_cap(study: Study, one_per_utterance: bool) -> bool:
    if study.test_kind is TestKind.MUSHRA:
        return False  # MUSHRA units are already one-per-utterance bundles
    return one_per_utterance


def build_trial_schedule(
    study: Study,
    stimuli: Sequence[Stimulus],
    rater_pool_size: int,
    seed: int,
    *,
    one_per_utterance: bool = False,
    anti_streak: bool = True,
) -> TrialSchedule:
    """Assign trials to ``rater_pool_size`` raters and order each rater's list.

    Raises :class:`SizingError` when the pool cannot reach coverage.  Set
    ``anti_streak=False`` to fall back to a plain uniform per-rater shuffle
    (the stratified order is this scheduler's choice, not a protocol
    requirement, so experiments can rerun without it).  ``one_per_utterance``
    turns on the stricter anti-memorization cap described in the module
    docstring.
    """
    if rater_pool_size < 1:
        raise SizingError(rater_pool_size, minimum_feasible_pool(study, stimuli, one_per_utterance=one_per_utterance))
    cap = _effective_cap(study, one_per_utterance)
    units = _trial_units(study, stimuli)
    need = study.min_raters_per_system

    minimum = minimum_feasible_pool(study, stimuli, one_per_utterance=one_per_utterance)
    if rater_pool_size < minimum:
        raise SizingError(rater_pool_size, minimum)

    width = max(4, len(str(rater_pool_size)))
    rater_ids = [f"r{i:0{width}d}" for i in range(1, rater_pool_size + 1)]

    # Batches of trial units whose copies must land on distinct raters:
    # with the cap on, all units of one utterance form a batch; otherwise
    # each unit is its own batch.
    if cap:
        batches: dict[str, list[tuple[str, tuple[Stimulus, ...]]]] = {}
        for utt, group in units:
            batches.setdefault(utt, []).append((utt, group))
        batch_list = [batches[utt] for utt in sorted(batches)]
    else:
        batch_list = [[unit] for unit in units]

    rng = _derived_rng(seed, study.study_id, "assign")
    rng.shuffle(batch_list)

    load = {rid: 0 for rid in rater_ids}
    base_order = list(rater_ids)
    rng.shuffle(base_order)  # fixed tiebreak order for min-load selection
    tie_rank = {rid: i for i, rid in enumerate(base_order)}

    assigned: dict[str, list[tuple[Stimulus, ...]]] = {rid: [] for rid in rater_ids}
    for batch in batch_list:
        slots = need * len(batch)
        if slots > rater_pool_size:
            raise SizingError(rater_pool_size, minimum)  # pragma: no cover - sizing pre-check owns this
        chosen = sorted(rater_ids, key=lambda r: (load[r], tie_rank[r]))[:slots]
        for i, rid in enumerate(chosen):
            _, group = batch[i % len(batch)]
            assigned[rid].append(group)
            load[rid] += 1

    raters: dict[str, tuple[TrialSpec, ...]] = {}
    for rid in rater_ids:
        groups = assigned[rid]
        rater_rng = _derived_rng(seed, study.study_id, "order", rid)
        ordered = _order_trials(groups, rater_rng, anti_streak=anti_streak and study.test_kind is not TestKind.MUSHRA)
        specs = []
        for idx, group in enumerate(ordered, start=1):
            ids = [s.stimulus_id for s in group]
            if len(ids) > 1:
                rater_rng.shuffle(ids)  # per-rater position randomization inside MUSHRA trials
            specs.append(TrialSpec(trial_id=f"{rid}-t{idx:03d}", stimulus_ids=tuple(ids)))
        raters[rid] = tuple(specs)

    return TrialSchedule(study_id=study.study_id, seed=seed, pool=rater_pool_size, raters=raters)


def _order_trials(
    groups: list[tuple[Stimulus, ...]], rng: random.Random, *, anti_streak: bool
) -> list[tuple[Stimulus, ...]]:
    """Seeded shuffle; when ``anti_streak``, rearrange so consecutive trials
    avoid sharing a system, repeating one only when no alternative exists."""
    shuffled = list(groups)
    rng.shuffle(shuffled)
    if not anti_streak or len(shuffled) < 3:
        return shuffled

    queues: dict[str, list[tuple[Stimulus, ...]]] = {}
    for group in shuffled:
        queues.setdefault(group[0].system, []).append(group)

    order: list[tuple[Stimulus, ...]] = []
    prev: Optional[str] = None
    remaining = sum(len(q) for q in queues.values())
    while remaining:
        candidates = [s for s, q in queues.items() if q and s != prev]
        if not candidates:
            candidates = [s for s, q in queues.items() if q]  # forced repeat
        # most-constrained system first keeps the tail interleavable
        best = max(len(queues[s]) for s in candidates)
        pick = rng.choice(sorted(s for s in candidates if len(queues[s]) == best))
        order.append(queues[pick].pop(0))
        prev = pick
        remaining -= 1
    return order


def next_unrated(
    schedule: TrialSchedule, rater_id: str, completed_trial_ids: set[str]
) -> Optional[TrialSpec]:
    """First scheduled trial the rater has not completed, in schedule order;
    None once everything is done."""
    try:
        trials = schedule.raters[rater_id]
    except KeyError:
        raise UnknownRaterError(rater_id) from None
    for spec in trials:
        if spec.trial_id not in completed_trial_ids:
            return spec
    return None
