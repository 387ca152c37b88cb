"""Output-file schemas and the checks run before a command reports success."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import jsonschema

from .errors import Se3KoopmanError
from .trajio import CSV_COLUMNS as TRAJECTORY_COLUMNS


class OutputSchemaError(Se3KoopmanError):
    pass


METRICS_COLUMNS = ["state_group", "nrmse_mean", "nrmse_std"]
METRICS_ROWS = ["p", "v", "Theta", "omega", "average"]

_STATE_NAMES = [c for c in TRAJECTORY_COLUMNS[1:19]]
RUN_COLUMNS = (
    ["t"]
    + [f"ref_{c}" for c in _STATE_NAMES]
    + [f"act_{c}" for c in _STATE_NAMES]
    + ["ft", "m1", "m2", "m3", "qp_iterations", "solve_us"]
)
PLOT_STATE_COLUMNS = ["t"] + [
    f"{kind}_{g}{i}" for g in ("p", "v", "Theta", "omega") for kind in ("ref", "act") for i in (1, 2, 3)
]
PLOT_INPUT_COLUMNS = ["t", "ft", "m1", "m2", "m3"] + [
    f"{b}_{c}" for b in ("lo", "hi") for c in ("ft", "m1", "m2", "m3")
]
SWEEP_COLUMNS = [
    "p",
    "N_h",
    "status",
    "nrmse_p",
    "nrmse_v",
    "nrmse_Theta",
    "nrmse_omega",
    "nrmse_average",
    "track_nrmse_p",
    "track_mean_ms",
    "error",
]

_MATRIX = {
    "type": "object",
    "required": ["shape", "data"],
    "properties": {
        "shape": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
        "data": {"type": "array", "items": {"type": "number"}},
    },
}

MODEL_SCHEMA = {
    "type": "object",
    "required": ["format", "version", "p", "t_s", "A", "B", "C", "diagnostics"],
    "properties": {
        "format": {"const": "se3-koopman-model"},
        "version": {"type": "integer"},
        "p": {"type": "integer", "minimum": 1},
        "t_s": {"type": "number", "exclusiveMinimum": 0},
        "A": _MATRIX,
        "B": _MATRIX,
        "C": _MATRIX,
        "diagnostics": {"type": "object"},
    },
}

TRAIN_REPORT_SCHEMA = {
    "type": "object",
    "required": ["lifted_dim", "lift_order", "n_snapshots", "residual_sq", "g2_rank"],
    "properties": {
        "lifted_dim": {"type": "integer"},
        "lift_order": {"type": "integer"},
        "n_snapshots": {"type": "integer", "minimum": 1},
        "residual_sq": {"type": "number", "minimum": 0},
        "g2_rank": {"type": "integer", "minimum": 1},
    },
}

_GROUP_ERRORS = {
    "type": "object",
    "required": ["p", "v", "Theta", "omega"],
    "additionalProperties": {"type": ["number", "null"]},
}

TRACK_SUMMARY_SCHEMA = {
    "type": "object",
    "required": [
        "n_steps",
        "nrmse_eval_window",
        "nrmse_full",
        "inputs_within_limits",
        "qp_failures",
        "timing",
        "meets_100hz",
    ],
    "properties": {
        "n_steps": {"type": "integer", "minimum": 1},
        "nrmse_eval_window": _GROUP_ERRORS,
        "nrmse_full": _GROUP_ERRORS,
        "inputs_within_limits": {"type": "boolean"},
        "qp_failures": {"type": "integer", "minimum": 0},
        "meets_100hz": {"type": "boolean"},
        "timing": {
            "type": "object",
            "required": ["mean_ms", "p50_ms", "p95_ms", "max_ms", "rate_hz"],
            "additionalProperties": {"type": "number"},
        },
    },
}


def check_json(path, schema) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        jsonschema.validate(data, schema)
    except (json.JSONDecodeError, jsonschema.ValidationError) as exc:
        raise OutputSchemaError(f"{path}: {exc}") from exc
    return data


def check_model_file(path) -> dict:
    data = check_json(path, MODEL_SCHEMA)
    for key in ("A", "B", "C"):
        rows, cols = data[key]["shape"]
        if len(data[key]["data"]) != rows * cols:
            raise OutputSchemaError(f"{path}: matrix {key} payload does not match its shape")
    return data


def _read_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def check_csv_header(path, columns) -> list:
    rows = _read_csv(path)
    if not rows or rows[0] != list(columns):
        raise OutputSchemaError(f"{path}: header does not match the expected columns")
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(columns):
            raise OutputSchemaError(f"{path}: line {i} has {len(row)} cells, expected {len(columns)}")
    return rows


def check_metrics_csv(path) -> list:
    rows = check_csv_header(path, METRICS_COLUMNS)
    if [r[0] for r in rows[1:]] != METRICS_ROWS:
        raise OutputSchemaError(f"{path}: rows must be {METRICS_ROWS}")
    for r in rows[1:]:
        try:
            float(r[1]), float(r[2])
        except ValueError as exc:
            raise OutputSchemaError(f"{path}: non-numeric metric in row {r[0]}") from exc
    return rows
