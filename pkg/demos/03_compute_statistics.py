"""Walkthrough: every aggregate the statistics engine computes.

Fixtures below are reconstructed from counts so each number is auditable by
hand; the same calls work on any exported results CSV via
``ResponseSet.from_csv(path)``.

Run:  python3 demos/03_compute_statistics.py
"""

from earshot import (
    ResponseSet,
    TestKind,
    compute_ci,
    compute_hfr,
    compute_marker_rates,
    compute_mushra,
    flag_rushed,
    hfr_table,
    timing_stats,
)
from earshot.render import render_hfr_table, render_marker_table, render_timing_table
from earshot.stats import Rating
from earshot.core import Origin


def rating(label, system, study_id, i, **kw):
    return Rating(
        study_id=study_id,
        rater_id=kw.pop("rater_id", f"r{i % 30:04d}"),
        session_id="sess",
        trial_id=kw.pop("trial_id", f"{study_id}-{system}-{i}"),
        test_kind=kw.pop("test_kind", TestKind.HFR),
        system=system,
        utterance_id=f"u{i % 30}",
        stimulus_id=f"{system}-{i % 30}",
        origin=Origin.HUMAN if system == "human" else Origin.MACHINE,
        label=label,
        markers=frozenset(kw.pop("markers", ())),
        mushra_score=kw.pop("mushra_score", None),
        response_time_ms=kw.pop("response_time_ms", 24_000),
        decision_time_ms=2_000,
        playback_verified=True,
    )


def block(n, hits, system, study_id):
    return [
        rating("human" if i < hits else "tts", system, study_id, i) for i in range(n)
    ]


# Fooling rate over one cell: 705 of 900 judgments said "human".
cell = ResponseSet(block(900, 705, "human", "bench-a"))
result = compute_hfr(cell)
print(f"HFR: {result.estimate_pct:.2f}%  n={result.n}  CI=[{result.ci_low_pct:.2f}, {result.ci_high_pct:.2f}]")

# The half-width calibration point: a 50% estimate over 900 responses.
low, high = compute_ci(50.0, 900)
print(f"CI half-width at (50.0, 900): {(high - low) / 2:.4f}")
print(f"Wilson variant:               {compute_ci(50.0, 900, method='wilson')}")

# A grouped table across three benchmark columns, unweighted row means.
rows = []
for study_id, human_hits, tts_hits in (("bench-a", 705, 552), ("bench-b", 660, 411), ("bench-c", 636, 411)):
    rows += block(900, human_hits, "human", study_id)
    rows += block(900, tts_hits, "styletts2", study_id)
print("\n" + render_hfr_table(hfr_table(ResponseSet(rows))))

# Granular marker shares: multi-select, denominator includes human labels.
granular = [
    rating(
        "tts" if i < 361 else "human",
        "xtts",
        "gran",
        i,
        test_kind=TestKind.HFR_GRANULAR,
        markers=("digital_voice", "unnatural_pauses") if i < 120 else ("digital_voice",) if i < 361 else (),
    )
    for i in range(1000)
]
marker_table = compute_marker_rates(ResponseSet(granular), {"xtts": "open-source"})
print(render_marker_table(marker_table))

# MUSHRA means with the hidden reference reported as an ordinary system.
mushra_rows = []
for i, (system, scores) in enumerate(
    (("human", (72, 75, 78)), ("play-x", (82, 85, 88)), ("open-y", (60, 70, 80)))
):
    for j, s in enumerate(scores):
        mushra_rows.append(
            rating(None, system, "mushra", i * 3 + j, test_kind=TestKind.MUSHRA, mushra_score=s)
        )
for system, res in compute_mushra(ResponseSet(mushra_rows)).items():
    print(f"MUSHRA {system}: mean={res.mean:.2f} n={res.n} CI=[{res.ci_low:.2f}, {res.ci_high:.2f}]")

# Timing per audio sample and rush flags: a 254.7 s six-stimulus MUSHRA
# trial divides down to 42.45 s per sample.
one_mushra_trial = [
    rating(
        None, f"s{k}", "t-m", k,
        test_kind=TestKind.MUSHRA, mushra_score=50, response_time_ms=254_700,
        trial_id="m-trial-1", rater_id="r0001",
    )
    for k in range(6)
]
timed = ResponseSet(block(3, 2, "human", "t")[:3] + one_mushra_trial)
print("\n" + render_timing_table(timing_stats(timed)))
print("rush flags under 500 ms:", flag_rushed(timed, 500) or "none")
