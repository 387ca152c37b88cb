import numpy as np
import pytest

from se3_koopman.dynamics import QuadParams, sample_random_inputs, simulate
from se3_koopman.trajio import CSV_COLUMNS, read_csv, read_json, write_csv, write_json

from conftest import random_state


@pytest.fixture
def traj(rng):
    P = QuadParams()
    inputs = sample_random_inputs(20, [P.hover_thrust, 0, 0, 0], [10] * 4, 11)
    return simulate(random_state(rng), inputs, P, 0.001)


def _same(a, b):
    assert a.t_s == b.t_s and len(a.states) == len(b.states)
    for x, y in zip(a.states, b.states):
        for f in ("p", "v", "R", "w"):
            assert np.array_equal(getattr(x, f), getattr(y, f))
    for u, w in zip(a.inputs, b.inputs):
        assert np.array_equal(u.as_array(), w.as_array())


def test_csv_roundtrip_is_exact(traj, tmp_path):
    path = tmp_path / "traj.csv"
    write_csv(traj, path)
    _same(traj, read_csv(path))
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == CSV_COLUMNS
    assert len(lines) == len(traj.states) + 1
    assert lines[-1].endswith(",,,,")


def test_csv_rotation_columns_are_column_stacked(traj, tmp_path):
    path = tmp_path / "traj.csv"
    write_csv(traj, path)
    row = path.read_text().splitlines()[1].split(",")
    R = traj.states[0].R
    assert float(row[CSV_COLUMNS.index("r21")]) == R[1, 0]
    assert float(row[CSV_COLUMNS.index("r12")]) == R[0, 1]


def test_json_roundtrip_is_exact(traj, tmp_path):
    path = tmp_path / "traj.json"
    write_json(traj, path)
    _same(traj, read_json(path))


def test_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_csv(path)
