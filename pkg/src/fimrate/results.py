"""Serialization of solve results and sweep tables."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .bca import SolveResult

SCHEMA_VERSION = "1.0"

SUMMARY_COLUMNS = ("axis", "value", "scheme", "mean_sum_rate_bps_hz", "stderr",
                   "drops_used", "infeasible_drops")
DROP_COLUMNS = ("axis", "value", "drop", "attempt", "scheme", "sum_rate_bps_hz",
                "scheme_feasible", "drop_feasible", "error")
TRAJECTORY_COLUMNS = ("drop", "step", "block", "sum_rate_bps_hz")

_INT_COLUMNS = {"drops_used", "infeasible_drops", "drop", "attempt", "step"}
_FLOAT_COLUMNS = {"value", "mean_sum_rate_bps_hz", "stderr", "sum_rate_bps_hz"}
_BOOL_COLUMNS = {"scheme_feasible", "drop_feasible"}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))      # shortest round-trip representation
    if v is None:
        return ""
    return str(v)


def _parse(col: str, text: str):
    if col in _INT_COLUMNS:
        return int(text)
    if col in _FLOAT_COLUMNS:
        return float(text)
    if col in _BOOL_COLUMNS:
        return text == "true"
    if col == "error":
        return text or None
    return text


def write_table(path: str | Path, rows, columns) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
    return path


def read_table(path: str | Path) -> list:
    """Read a CSV written by :func:`write_table`, restoring column types."""
    with Path(path).open(newline="") as fh:
        return [{k: _parse(k, v) for k, v in row.items()} for row in csv.DictReader(fh)]


def drop_rows(axis: str, outcomes, schemes) -> list:
    """Long-format rows, one per (value, drop, scheme)."""
    rows = []
    for o in outcomes:
        for scheme in schemes:
            rows.append({"axis": axis, "value": float(o.value), "drop": o.drop, "attempt": o.attempt,
                         "scheme": scheme, "sum_rate_bps_hz": float(o.sum_rates.get(scheme, math.nan)),
                         "scheme_feasible": bool(o.scheme_feasible.get(scheme, False)),
                         "drop_feasible": bool(o.feasible), "error": o.error})
    return rows


def trajectory_rows(drop: int, result: SolveResult) -> list:
    return [{"drop": drop, "step": i, "block": label, "sum_rate_bps_hz": float(val)}
            for i, (label, val) in enumerate(result.objective_trajectory)]


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def result_record(drop: int, result: SolveResult, wavelength: float) -> dict:
    """Per-drop entry of the run JSON.  Wall time is left out so output bytes are reproducible."""
    return _clean({
        "drop": drop,
        "feasible": result.feasible,
        "sum_rate_bps_hz": result.sum_rate,
        "user_rates_bps_hz": result.user_rates,
        "transmit_power_w": result.transmit_power,
        "p_opt_w": result.p_opt,
        "y_opt_m": result.y_opt,
        "y_opt_wavelengths": np.asarray(result.y_opt) / wavelength,
        "trajectory": [{"block": b, "sum_rate_bps_hz": v} for b, v in result.objective_trajectory],
        "iterations": result.iterations,
        "diagnostics": result.diagnostics,
    })


def write_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"schema_version": SCHEMA_VERSION, **_clean(payload)}
    path.write_text(json.dumps(body, indent=2) + "\n")
    return path
