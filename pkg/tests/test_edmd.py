import json

import numpy as np
import pytest

from se3_koopman.dynamics import ControlInput, QuadParams, QuadState, sample_random_inputs, simulate
from se3_koopman.edmd import (
    KoopmanModel,
    build_dataset,
    edmd_operator,
    fit,
    fit_lifted,
    fit_residual,
    load_model,
    nrmse,
    nrmse_arrays,
    predict_rollout,
    rollout_lifted,
    save_model,
    truncated_pinv,
)
from se3_koopman.errors import (
    CorruptFileError,
    DegenerateDataError,
    EmptyDatasetError,
    FormatVersionMismatchError,
    PredictionDivergedError,
    ZeroReferenceError,
)
from se3_koopman.lift import LiftConfig, lift, reconstruct_state

from conftest import planted_system, random_state

P = QuadParams()


def _trajs(n, steps, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        inputs = sample_random_inputs(steps, [P.hover_thrust, 0, 0, 0], [10] * 4, seed * 1000 + i)
        out.append(simulate(random_state(rng, 0.5), inputs, P, 0.001))
    return out


def test_dataset_counts():
    data = build_dataset(_trajs(3, 100), LiftConfig(3))
    assert len(data) == 300
    one = build_dataset(_trajs(1, 1), LiftConfig(3))
    assert len(one) == 1
    with pytest.raises(EmptyDatasetError):
        build_dataset([], LiftConfig(3))


def test_dataset_pairs_never_cross_trajectories():
    trajs = _trajs(2, 5)
    data = build_dataset(trajs, LiftConfig(1))
    # pair 4 is the last of trajectory 0, pair 5 the first of trajectory 1
    assert data.y[4] is trajs[0].states[5]
    assert data.x[5] is trajs[1].states[0]


def test_planted_recovery():
    A0, B0, Zx, U, Zy, runs = planted_system()
    model = fit_lifted(Zx, U, Zy, p=3, t_s=0.001)
    assert np.linalg.norm(model.A - A0) <= 1e-8
    assert np.linalg.norm(model.B - B0) <= 1e-8
    Z, Uk = runs[0]
    pred = rollout_lifted(model, Z[0], Uk)
    assert np.max(np.abs(pred - Z)) <= 1e-6


def test_scalar_closed_form():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(200)
    u = rng.standard_normal(200)
    y = 0.9 * x + 0.1 * u
    K, diag = edmd_operator(x[:, None], u[:, None], y[:, None])
    np.testing.assert_allclose(K, [[0.9, 0.1]], atol=1e-10)
    assert diag["g2_rank"] == 2


def test_matches_stacked_least_squares_oracle():
    # Noisy targets make this a genuine regression problem with a well-conditioned G2.
    _, _, Zx, U, Zy, _ = planted_system(seed=5)
    Zy = Zy + 0.1 * np.random.default_rng(2).standard_normal(Zy.shape)
    Za = np.hstack([Zx, U])
    Q, R = np.linalg.qr(Za)
    K_ls = np.linalg.solve(R, Q.T @ Zy).T
    K, diag = edmd_operator(Zx, U, Zy)
    assert diag["g2_rank"] == Za.shape[1]
    np.testing.assert_allclose(K, K_ls, atol=1e-8)


def test_duplicating_snapshots_leaves_K_unchanged(training_trajs):
    data = build_dataset(training_trajs[:20], LiftConfig(3))
    Zx, U, Zy = data.lifted()
    K1, _ = edmd_operator(Zx, U, Zy)
    K2, _ = edmd_operator(np.vstack([Zx, Zx]), np.vstack([U, U]), np.vstack([Zy, Zy]))
    np.testing.assert_allclose(K2, K1, atol=1e-9 * np.abs(K1).max())


def test_permutation_invariance():
    _, _, Zx, U, Zy, _ = planted_system(seed=3)
    K1, _ = edmd_operator(Zx, U, Zy)
    perm = np.random.default_rng(0).permutation(len(Zx))
    K2, _ = edmd_operator(Zx[perm], U[perm], Zy[perm])
    np.testing.assert_allclose(K2, K1, atol=1e-12 * max(1.0, np.abs(K1).max()) * 100)


def test_least_squares_optimality(training_trajs):
    data = build_dataset(training_trajs[:20], LiftConfig(3))
    Zx, U, Zy = data.lifted()
    K, diag = edmd_operator(Zx, U, Zy)
    base = fit_residual(K, Zx, U, Zy)
    assert base == pytest.approx(diag["residual_sq"])
    rng = np.random.default_rng(0)
    for _ in range(20):
        dK = rng.standard_normal(K.shape)
        dK *= 1e-3 / np.linalg.norm(dK)
        assert fit_residual(K + dK, Zx, U, Zy) >= base - 1e-12 * max(base, 1.0)


def test_fit_diagnostics(trained):
    model, report = trained
    d = model.diagnostics
    assert model.dim == 51 and model.K.shape == (51, 55)
    assert 24 <= d["g2_rank"] < 55  # vec(hat(w)) redundancy makes G2 rank deficient
    assert d["pinv_rtol"] == 1e-10
    assert d["n_samples"] == 10_000
    assert report["g2_rank"] == d["g2_rank"]


def test_underdetermined_fit_warns():
    trajs = _trajs(1, 10)
    with pytest.warns(UserWarning):
        fit(build_dataset(trajs, LiftConfig(3)))


def test_truncated_pinv():
    G = np.diag([1.0, 1e-3, 1e-12])
    Gp, rank, smax = truncated_pinv(G)
    assert rank == 2 and smax == 1.0
    np.testing.assert_allclose(Gp, np.diag([1.0, 1e3, 0.0]))
    with pytest.raises(DegenerateDataError):
        truncated_pinv(np.zeros((3, 3)))


def test_rollout_edge_cases(trained):
    model, _ = trained
    x0 = QuadState(p=[0.1, 0, 0], w=[0, 0, 0.5])
    traj = predict_rollout(model, x0, [])
    assert len(traj.states) == 1 and traj.states[0] is x0
    u = ControlInput(P.hover_thrust + 1.0, [0.1, 0, 0])
    one = predict_rollout(model, x0, [u])
    expected, _ = reconstruct_state(model.A @ lift(x0, model.cfg) + model.B @ u.as_array())
    assert one.states[1].allclose(expected, atol=0.0)


def test_rollout_divergence():
    N = 51
    model = KoopmanModel(2.0 * np.eye(N), np.zeros((N, 4)), np.eye(24, N), 3, 0.001)
    with pytest.raises(PredictionDivergedError) as info:
        rollout_lifted(model, np.ones(N), np.zeros((100, 4)))
    assert info.value.step_index is not None


def test_nrmse_values():
    truth = np.array([[3.0], [4.0]])
    assert nrmse_arrays(truth, truth) == 0.0
    assert nrmse_arrays(1.1 * truth, truth) == pytest.approx(10.0)
    assert nrmse_arrays(np.array([[3.0], [5.0]]), truth) == pytest.approx(20.0)
    pred = np.array([[2.0], [4.5]])
    assert nrmse_arrays(7.0 * pred, 7.0 * truth) == pytest.approx(nrmse_arrays(pred, truth))
    with pytest.raises(ZeroReferenceError):
        nrmse_arrays(truth, np.zeros_like(truth))


def test_nrmse_on_trajectories():
    traj = _trajs(1, 20)[0]
    for g in ("p", "v", "Theta", "omega", "all"):
        assert nrmse(traj, traj, g) == 0.0
    with pytest.raises(ValueError):
        nrmse(traj, traj, "bogus")


def test_save_load_roundtrip(trained, tmp_path):
    model, _ = trained
    path = tmp_path / "model.json"
    save_model(model, path)
    back = load_model(path)
    for k in ("A", "B", "C"):
        assert np.array_equal(getattr(back, k), getattr(model, k))
    assert back.p == model.p and back.t_s == model.t_s


def test_load_truncated_and_future_version(trained, tmp_path):
    model, _ = trained
    path = tmp_path / "model.json"
    save_model(model, path)
    text = path.read_text()
    bad = tmp_path / "truncated.json"
    bad.write_text(text[: len(text) // 2])
    with pytest.raises(CorruptFileError):
        load_model(bad)
    data = json.loads(text)
    data["version"] = 99
    future = tmp_path / "future.json"
    future.write_text(json.dumps(data))
    with pytest.raises(FormatVersionMismatchError):
        load_model(future)
    data["version"] = 1
    data["A"]["data"] = data["A"]["data"][:-1]
    short = tmp_path / "short.json"
    short.write_text(json.dumps(data))
    with pytest.raises(CorruptFileError):
        load_model(short)
