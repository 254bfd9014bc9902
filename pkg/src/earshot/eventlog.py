"""Append-only event log: the single source of truth for session state.

Records are newline-delimited JSON objects, one per line, each carrying a
dense strictly-increasing sequence number, a wall-clock timestamp in epoch
milliseconds, an event kind, a kind-specific payload, and a CRC-32 checksum
(hex) computed over the canonical JSON of the record minus the checksum
field.  The format is greppable and corruption-detectable without any
database dependency; a truncated or bit-flipped tail is recoverable.

Replay yields records in order and halts at the first corrupt record, so a
fold over ``replay()`` reconstructs exactly the state that was durably
acknowledged.
"""

from __future__ import annotations

import csv
import io
import json
import os
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Union

from .assignment import TrialSchedule
from .core import EarshotError, Stimulus, Study, TestKind


class StorageError(EarshotError):
    """Unrecoverable storage failure; the service surfaces it as unavailable."""


@dataclass(frozen=True)
class EventRecord:
    seq: int
    ts: int
    kind: str
    payload: dict


def _canonical(seq: int, ts: int, kind: str, payload: dict) -> bytes:
    doc = {"seq": seq, "ts": ts, "kind": kind, "payload": payload}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _checksum(seq: int, ts: int, kind: str, payload: dict) -> str:
    return f"{zlib.crc32(_canonical(seq, ts, kind, payload)) & 0xFFFFFFFF:08x}"


def encode_record(record: EventRecord) -> bytes:
    doc = {
        "seq": record.seq,
        "ts": record.ts,
        "kind": record.kind,
        "payload": record.payload,
        "crc": _checksum(record.seq, record.ts, record.kind, record.payload),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"


def decode_record(line: bytes, expected_seq: int) -> Optional[EventRecord]:
    """Parse one log line; None for anything corrupt or out of sequence."""
    try:
        doc = json.loads(line)
    except (ValueError, UnicodeDecodeError):
        return None
    if not isinstance(doc, dict):
        return None
    try:
        seq, ts, kind, payload, crc = doc["seq"], doc["ts"], doc["kind"], doc["payload"], doc["crc"]
    except KeyError:
        return None
    if not (isinstance(seq, int) and isinstance(ts, int) and isinstance(kind, str) and isinstance(payload, dict)):
        return None
    if seq != expected_seq:
        return None
    if crc != _checksum(seq, ts, kind, payload):
        return None
    return EventRecord(seq=seq, ts=ts, kind=kind, payload=payload)


def _validate_event(kind: str, payload: dict) -> None:
    if not kind or not isinstance(kind, str):
        raise ValueError("event kind must be a non-empty string")
    if not isinstance(payload, dict):
        raise ValueError("event payload must be a dict")
    try:
        json.dumps(payload, sort_keys=True)
    except (TypeError, ValueError) as e:
        raise ValueError(f"event payload is not JSON-serializable: {e}") from e


class EventLog:
    """In-memory log; the file-backed variant shares its interface."""

    def __init__(self) -> None:
        self._records: list[EventRecord] = []

    @property
    def last_seq(self) -> int:
        return self._records[-1].seq if self._records else 0

    def append(self, kind: str, payload: dict, ts: int) -> int:
        """Validate, persist, and return the new dense sequence number."""
        _validate_event(kind, payload)
        record = EventRecord(seq=self.last_seq + 1, ts=ts, kind=kind, payload=payload)
        self._persist(record)
        self._records.append(record)
        return record.seq

    def replay(self, from_seq: int = 1) -> Iterator[EventRecord]:
        if from_seq < 1:
            raise ValueError("from_seq starts at 1")
        for record in self._records:
            if record.seq >= from_seq:
                yield record

    def _persist(self, record: EventRecord) -> None:  # overridden by FileEventLog
        pass

    def close(self) -> None:
        pass


class FileEventLog(EventLog):
    """Durable log over one NDJSON file.

    Opening scans the file; a corrupt or truncated tail is cut back to the
    last intact record (anything past it was never acknowledged).  Appends
    are flushed and fsynced before the sequence number is returned.
    """

    def __init__(self, path: Union[str, Path]):
        super().__init__()
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        good_bytes = 0
        if self.path.exists():
            with open(self.path, "rb") as fh:
                for line in fh:
                    record = decode_record(line, self.last_seq + 1)
                    if record is None or not line.endswith(b"\n"):
                        break
                    self._records.append(record)
                    good_bytes += len(line)
        try:
            self._fh = open(self.path, "ab")
            if self._fh.tell() != good_bytes:
                self._fh.close()
                with open(self.path, "r+b") as trunc:
                    trunc.truncate(good_bytes)
                self._fh = open(self.path, "ab")
        except OSError as e:
            raise StorageError(f"cannot open event log {self.path}: {e}") from e

    def _persist(self, record: EventRecord) -> None:
        try:
            self._fh.write(encode_record(record))
            self._fh.flush()
            os.fsync(self._fh.fileno())
        except OSError as e:
            raise StorageError(f"append to {self.path} failed: {e}") from e

    def close(self) -> None:
        self._fh.close()


def replay_file(path: Union[str, Path], from_seq: int = 1) -> Iterator[EventRecord]:
    """Read-only replay of a log file, halting at the first corrupt record."""
    expected = 1
    with open(path, "rb") as fh:
        for line in fh:
            record = decode_record(line, expected)
            if record is None or not line.endswith(b"\n"):
                return
            expected += 1
            if record.seq >= from_seq:
                yield record


def export_responses(
    records: Iterable[EventRecord],
    study: Study,
    stimuli: Mapping[str, Stimulus],
    schedule: TrialSchedule,
) -> str:
    """Render every accepted response of one study as the results CSV.

    One row per response for forced-choice kinds, one row per scored
    stimulus for MUSHRA, ordered by (rater_id, trial sequence); repeated
    exports of the same log are byte-identical.
    """
    sessions: dict[str, tuple[str, str]] = {}  # session_id -> (study_id, rater_id)
    responses: list[tuple[str, str, dict]] = []
    for record in records:
        if record.kind == "session-created":
            p = record.payload
            sessions[p["session_id"]] = (p["study_id"], p["rater_id"])
        elif record.kind == "response-accepted":
            p = record.payload
            owner = sessions.get(p["session_id"])
            if owner and owner[0] == study.study_id:
                responses.append((owner[1], p["session_id"], p))

    trial_pos = {
        (rid, spec.trial_id): (i, spec)
        for rid, specs in schedule.raters.items()
        for i, spec in enumerate(specs)
    }
    responses.sort(key=lambda item: (item[0], trial_pos[(item[0], item[2]["trial_id"])][0]))

    from .stats import CSV_COLUMNS

    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rater_id, session_id, p in responses:
        _, spec = trial_pos[(rater_id, p["trial_id"])]
        response = p["response"]
        for sid in spec.stimulus_ids:
            st = stimuli[sid]
            if study.test_kind is TestKind.MUSHRA:
                label, markers, score = "", "", str(response["scores"][sid])
            else:
                label = response["label"]
                markers = ";".join(response.get("markers", []))
                score = ""
            writer.writerow(
                (
                    study.study_id, rater_id, session_id, p["trial_id"],
                    study.test_kind.value, st.system, st.utterance_id, sid,
                    st.origin.value, label, markers, score,
                    str(p["response_time_ms"]), str(p["decision_time_ms"]), "true",
                    str(p["served_at"]), str(p["responded_at"]),
                )
            )
    return out.getvalue()
