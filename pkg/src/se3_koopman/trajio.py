"""Trajectory serialization.

CSV layout, one row per state::

    t,px,py,pz,vx,vy,vz,r11,r21,r31,r12,r22,r32,r13,r23,r33,wx,wy,wz,ft,m1,m2,m3

``rIJ`` is ``R[I-1, J-1]``; the nine rotation columns are written in
column-stacked order. The input applied over ``[t_k, t_k + t_s)`` sits on row
``k``; the final row leaves the four input cells empty. Floats are written
with ``repr`` so a write/read cycle is bit-exact.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .dynamics import ControlInput, QuadState, Trajectory
from .se3 import devectorize, vectorize

CSV_COLUMNS = (
    ["t", "px", "py", "pz", "vx", "vy", "vz"]
    + [f"r{i}{j}" for j in (1, 2, 3) for i in (1, 2, 3)]
    + ["wx", "wy", "wz", "ft", "m1", "m2", "m3"]
)


def state_to_row(x: QuadState) -> list:
    return [*x.p, *x.v, *vectorize(x.R), *x.w]


def state_from_row(vals) -> QuadState:
    vals = np.asarray(vals, dtype=float)
    return QuadState(vals[0:3], vals[3:6], devectorize(vals[6:15]), vals[15:18])


def write_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for k, x in enumerate(traj.states):
            row = [k * traj.t_s, *state_to_row(x)]
            cells = [repr(float(c)) for c in row]
            if k < len(traj.inputs):
                cells += [repr(float(c)) for c in traj.inputs[k].as_array()]
            else:
                cells += [""] * 4
            writer.writerow(cells)


def read_csv(path, t_s: float | None = None) -> Trajectory:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected trajectory CSV header")
    body = rows[1:]
    if not body:
        raise ValueError(f"{path}: trajectory has no states")
    states, inputs, times = [], [], []
    for k, row in enumerate(body):
        if len(row) != len(CSV_COLUMNS):
            raise ValueError(f"{path}: row {k + 1} has {len(row)} cells")
        times.append(float(row[0]))
        states.append(state_from_row([float(c) for c in row[1:19]]))
        if k < len(body) - 1:
            inputs.append(ControlInput.from_array([float(c) for c in row[19:23]]))
    if t_s is None:
        if len(times) < 2:
            raise ValueError(f"{path}: single-state trajectory, pass t_s explicitly")
        t_s = times[1]
    return Trajectory(t_s, states, inputs)


def to_dict(traj: Trajectory) -> dict:
    return {
        "t_s": traj.t_s,
        "states": [
            {"p": list(x.p), "v": list(x.v), "R": list(vectorize(x.R)), "w": list(x.w)}
            for x in traj.states
        ],
        "inputs": [list(u.as_array()) for u in traj.inputs],
    }


def from_dict(data: dict) -> Trajectory:
    states = [
        QuadState(s["p"], s["v"], devectorize(s["R"]), s["w"]) for s in data["states"]
    ]
    inputs = [ControlInput.from_array(u) for u in data["inputs"]]
    return Trajectory(float(data["t_s"]), states, inputs)


def write_json(traj: Trajectory, path) -> None:
    Path(path).write_text(json.dumps(to_dict(traj)), encoding="utf-8")


def read_json(path) -> Trajectory:
    return from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
