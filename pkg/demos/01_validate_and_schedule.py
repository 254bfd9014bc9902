"""Walkthrough: author a study manifest, validate it, build the trial schedule.

Run:  python3 demos/01_validate_and_schedule.py
"""

from earshot import (
    Origin,
    Stimulus,
    Study,
    TestKind,
    build_trial_schedule,
    dump_manifest,
    minimum_feasible_pool,
    validate_manifest,
)

# A small two-system study: genuine recordings under the reserved `human`
# label plus one TTS system, five utterances each.
study = Study(
    study_id="demo-hfr",
    test_kind=TestKind.HFR,
    systems=("human", "xtts"),
    utterance_count=5,
    min_raters_per_system=3,
    rng_seed=2024,
    compensation_redirect="https://crowd.example/complete?cc={code}",
)

stimuli = [
    Stimulus(
        stimulus_id=f"{system}-u{u:02d}",
        system=system,
        utterance_id=f"u{u:02d}",
        origin=Origin.HUMAN if system == "human" else Origin.MACHINE,
        audio_ref=f"audio/{system}-u{u:02d}.wav",
        duration_ms=4200 + 350 * u,
        prompt_utterance_id=None if system == "human" else f"u{(u + 1) % 5:02d}",
    )
    for system in study.systems
    for u in range(study.utterance_count)
]

report = validate_manifest(study, stimuli)
print("validation:", "clean" if report.ok else f"\n{report.render()}")

# Introduce a manifest mistake: a TTS stimulus whose voice prompt is the very
# utterance it synthesizes. The validator pinpoints it.
broken = stimuli + [
    Stimulus("xtts-bad", "xtts", "u00", Origin.MACHINE, "audio/bad.wav", 4000, prompt_utterance_id="u00")
]
print("\nwith a prompt==target stimulus:")
print(validate_manifest(study, broken).render())

# Scheduling: the pool floor follows from coverage arithmetic.
print("\nminimum feasible pool:", minimum_feasible_pool(study, stimuli))
schedule = build_trial_schedule(study, stimuli, rater_pool_size=3, seed=study.rng_seed)
for rater_id in schedule.rater_ids():
    order = [t.stimulus_ids[0] for t in schedule.raters[rater_id]]
    print(f"  {rater_id}: {len(order)} trials, first three -> {order[:3]}")

again = build_trial_schedule(study, stimuli, rater_pool_size=3, seed=study.rng_seed)
print("byte-identical rerun:", schedule.to_json() == again.to_json())

print("\nmanifest document (first 300 chars):")
print(dump_manifest(study, stimuli)[:300], "...")
