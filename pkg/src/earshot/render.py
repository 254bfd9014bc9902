"""Report rendering: aligned text, JSON, and CSV views of the result tables.

Rounding happens here and only here: internal arithmetic stays double
precision end-to-end, and printed percentages are rounded half-up at a
fixed number of decimals (2 for rates and scores, 1 for marker shares,
matching the precision the tables are conventionally read at).
"""

from __future__ import annotations

import csv
import io
import json
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping, Optional

from .core import MarkerCatalog, TestKind
from .stats import HfrTable, MarkerRateTable, MushraResult

FORMATS = ("text", "json", "csv")

#: How absent cells appear in rendered tables; never a zero.
ABSENT = "-"


def round_half_up(value: float, decimals: int = 2) -> float:
    quantum = Decimal(1).scaleb(-decimals)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def fmt(value: Optional[float], decimals: int = 2) -> str:
    if value is None:
        return ABSENT
    return f"{round_half_up(value, decimals):.{decimals}f}"


def _grid(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    def line(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [line(headers), line(["-" * w for w in widths])]
    out.extend(line(r) for r in rows)
    return "\n".join(out) + "\n"


# --- HFR table ---------------------------------------------------------------


def hfr_table_doc(table: HfrTable) -> dict:
    rows = []
    for row in table.row_labels:
        cells = {}
        for col in table.col_labels:
            cell = table.cells[(row, col)]
            cells[col] = (
                None
                if cell is None
                else {
                    "estimate_pct": round_half_up(cell.estimate_pct),
                    "ci_low_pct": round_half_up(cell.ci_low_pct),
                    "ci_high_pct": round_half_up(cell.ci_high_pct),
                    "n": cell.n,
                }
            )
        rows.append({"label": row, "cells": cells, "mu": round_half_up(table.row_mu[row])})
    return {"kind": "hfr-table", "columns": list(table.col_labels), "rows": rows}


def render_hfr_table(table: HfrTable, format: str = "text") -> str:
    if format == "json":
        return json.dumps(hfr_table_doc(table), indent=2) + "\n"
    if format == "csv":
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["row", "col", "estimate_pct", "ci_low_pct", "ci_high_pct", "n", "row_mu"])
        for row in table.row_labels:
            for col in table.col_labels:
                cell = table.cells[(row, col)]
                w.writerow(
                    [row, col, ABSENT, ABSENT, ABSENT, 0, fmt(table.row_mu[row])]
                    if cell is None
                    else [
                        row, col, fmt(cell.estimate_pct), fmt(cell.ci_low_pct),
                        fmt(cell.ci_high_pct), cell.n, fmt(table.row_mu[row]),
                    ]
                )
        return out.getvalue()
    headers = ["system"] + [f"{c}" for c in table.col_labels] + ["mu"]
    rows = []
    for row in table.row_labels:
        cells = []
        for col in table.col_labels:
            cell = table.cells[(row, col)]
            if cell is None:
                cells.append(ABSENT)
            else:
                cells.append(
                    f"{fmt(cell.estimate_pct)} [{fmt(cell.ci_low_pct)}, {fmt(cell.ci_high_pct)}] n={cell.n}"
                )
        rows.append([row] + cells + [fmt(table.row_mu[row])])
    return _grid(headers, rows)


# --- marker table --------------------------------------------------------------


def marker_table_doc(table: MarkerRateTable) -> dict:
    return {
        "kind": "marker-table",
        "cohorts": list(table.cohorts),
        "n": {c: table.n[c] for c in table.cohorts},
        "rows": [
            {
                "marker_id": mid,
                "rates": {c: round_half_up(table.rates[c][mid], 1) for c in table.cohorts},
            }
            for mid in table.marker_ids
        ],
    }


def render_marker_table(
    table: MarkerRateTable, format: str = "text", catalog: Optional[MarkerCatalog] = None
) -> str:
    display = {m.marker_id: m.display for m in catalog.markers} if catalog else {}
    if format == "json":
        return json.dumps(marker_table_doc(table), indent=2) + "\n"
    if format == "csv":
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["marker_id"] + list(table.cohorts))
        for mid in table.marker_ids:
            w.writerow([mid] + [fmt(table.rates[c][mid], 1) for c in table.cohorts])
        return out.getvalue()
    headers = ["marker"] + [f"{c} (n={table.n[c]})" for c in table.cohorts]
    rows = [
        [display.get(mid, mid)] + [fmt(table.rates[c][mid], 1) for c in table.cohorts]
        for mid in table.marker_ids
    ]
    return _grid(headers, rows)


# --- MUSHRA table ---------------------------------------------------------------


def mushra_table_doc(results: Mapping[str, MushraResult]) -> dict:
    ordered = sorted(results, key=lambda s: (-results[s].mean, s))
    return {
        "kind": "mushra-table",
        "rows": [
            {
                "system": s,
                "mean": round_half_up(results[s].mean),
                "ci_low": round_half_up(results[s].ci_low),
                "ci_high": round_half_up(results[s].ci_high),
                "n": results[s].n,
            }
            for s in ordered
        ],
    }


def render_mushra_table(results: Mapping[str, MushraResult], format: str = "text") -> str:
    doc = mushra_table_doc(results)
    if format == "json":
        return json.dumps(doc, indent=2) + "\n"
    if format == "csv":
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["system", "mean", "ci_low", "ci_high", "n"])
        for row in doc["rows"]:
            w.writerow([row["system"], fmt(row["mean"]), fmt(row["ci_low"]), fmt(row["ci_high"]), row["n"]])
        return out.getvalue()
    rows = [
        [r["system"], fmt(r["mean"]), f"[{fmt(r['ci_low'])}, {fmt(r['ci_high'])}]", str(r["n"])]
        for r in doc["rows"]
    ]
    return _grid(["system", "mean", "ci95", "n"], rows)


# --- timing table ----------------------------------------------------------------


def timing_table_doc(seconds_by_kind: Mapping[TestKind, float]) -> dict:
    return {
        "kind": "timing-table",
        "seconds_per_sample": {
            k.value: round_half_up(v) for k, v in sorted(seconds_by_kind.items(), key=lambda kv: kv[0].value)
        },
    }


def render_timing_table(seconds_by_kind: Mapping[TestKind, float], format: str = "text") -> str:
    doc = timing_table_doc(seconds_by_kind)
    if format == "json":
        return json.dumps(doc, indent=2) + "\n"
    if format == "csv":
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["test_kind", "seconds_per_sample"])
        for kind, value in doc["seconds_per_sample"].items():
            w.writerow([kind, fmt(value)])
        return out.getvalue()
    kinds = list(doc["seconds_per_sample"])
    return _grid(kinds, [[fmt(doc["seconds_per_sample"][k]) for k in kinds]])
