"""earshot: run listening studies and measure how often machines pass as human.

The package covers the full loop of a deception-style listening test:
validate a study manifest, build a balanced deterministic trial schedule,
run gated rater sessions over HTTP (full playback required before any
response counts), persist everything in an append-only event log, and
compute the aggregate statistics: fooling rates with binomial confidence
intervals, grouped tables with row means, granular marker rates, MUSHRA
score means, and per-sample timing.
"""

from .assignment import (
    SizingError,
    TrialSchedule,
    TrialSpec,
    UnknownRaterError,
    build_trial_schedule,
    minimum_feasible_pool,
    next_unrated,
)
from .core import (
    DEFAULT_CUE_LIST,
    DEFAULT_MARKER_CATALOG,
    EarshotError,
    HfrResult,
    KindMismatchError,
    ManifestParseError,
    MarkerCatalog,
    MarkerDef,
    NoDataError,
    Origin,
    Response,
    Stimulus,
    Study,
    TestKind,
    ValidationReport,
    Violation,
    dump_manifest,
    load_manifest,
    validate_manifest,
    validate_manifest_doc,
)
from .eventlog import EventLog, EventRecord, FileEventLog, export_responses, replay_file
from .session import (
    IntervalSet,
    SessionPhase,
    SessionService,
    StudyBundle,
    completion_code,
)
from .stats import (
    CSV_COLUMNS,
    HfrTable,
    MarkerRateTable,
    MushraResult,
    Rating,
    ResponseSet,
    SchemaError,
    compute_ci,
    compute_hfr,
    compute_marker_rates,
    compute_mushra,
    exclude_rushed,
    flag_rushed,
    hfr_table,
    mushra_post_screen,
    row_mean,
    timing_stats,
    z_value,
)

__version__ = "0.1.0"
