import csv
import io
import json

import numpy as np
import pytest

from l2plus import bounds
from l2plus.bounds import (
    BoundCell,
    BoundReport,
    certify_small_gain,
    compute_bound,
    relu_feedback_sim,
    sweep,
)
from l2plus.errors import DimensionMismatch, InvalidAlpha, NotHurwitz, SolverError
from l2plus.linsys import StateSpace


@pytest.mark.parametrize("alpha,N", [(-1.0, 0), (-1.0, 1), (-1.4, 5)])
def test_lag_bounds_equal_one(lag, alpha, N):
    assert compute_bound(lag, alpha, N) == pytest.approx(1.0, abs=1e-6)


def test_compute_bound_preconditions(lag):
    with pytest.raises(NotHurwitz):
        compute_bound(StateSpace([[0.5]], [[1]], [[1]], [[0]]), -1.0, 1)
    with pytest.raises(InvalidAlpha):
        compute_bound(lag, 0.5, 2)


def test_compute_bound_error_carries_cell(lag, monkeypatch):
    def broken(*args, **kwargs):
        raise SolverError("backend exploded")

    monkeypatch.setattr(bounds, "solve", broken)
    with pytest.raises(SolverError, match=r"alpha=-1.0, N=2.*backend exploded"):
        compute_bound(lag, -1.0, 2)
    cell = bounds.compute_cell(lag, -1.0, 2)
    assert cell.status == "Error" and cell.gamma is None and "exploded" in cell.message


def test_sweep_zero_degree(mimo):
    rep = sweep(mimo, [-1.0, -1.4], 0, lower_bound_trials=0)
    assert [(c.alpha, c.N) for c in rep.cells] == [(-1.0, 0), (-1.4, 0)]
    assert rep.cells[0].gamma == rep.cells[1].gamma
    assert rep.cells[0].gamma == pytest.approx(compute_bound(mimo, -1.0, 0), rel=1e-9)
    with pytest.raises(DimensionMismatch):
        sweep(mimo, [-1.0], -1)


def test_sweep_report_invariants(mimo):
    rep = sweep(mimo, [-1.4, -1.0], 4, lower_bound_trials=10, seed=1)
    assert [c.alpha for c in rep.cells[:5]] == [-1.0] * 5  # sorted by alpha, then N
    assert all(v["non_increasing"] for v in rep.monotone.values())
    assert all(v["no_worse_than_unfiltered"] for v in rep.improvement.values())
    assert all(v["within"] for v in rep.sandwich.values())
    assert rep.lower_bound <= min(c.gamma for c in rep.cells) + 1e-6
    assert rep.lower_bound_meta["seed"] == 1
    assert rep.best().gamma == min(c.gamma for c in rep.cells)


def test_sweep_keeps_partial_results(siso, monkeypatch):
    real = bounds.solve

    def flaky(problem, **kw):
        if problem.meta["N"] == 2:
            raise SolverError("no luck")
        return real(problem, **kw)

    monkeypatch.setattr(bounds, "solve", flaky)
    rep = sweep(siso, [-1.0], 3, lower_bound_trials=0)
    assert [c.status for c in rep.cells] == ["Optimal", "Optimal", "Error", "Optimal"]
    assert [c.N for c in rep.failed()] == [2]
    assert rep.monotone[-1.0]["non_increasing"]


def test_parallel_sweep_matches_serial(siso):
    a = sweep(siso, [-1.0, -1.2], 3, lower_bound_trials=0)
    b = sweep(siso, [-1.0, -1.2], 3, lower_bound_trials=0, workers=2)
    assert [(c.alpha, c.N, c.gamma) for c in a.cells] == [(c.alpha, c.N, c.gamma) for c in b.cells]


def test_monotonicity_violation_warns():
    cells = [BoundCell(-1.0, 0, 0.5, "Optimal", 0.0), BoundCell(-1.0, 1, 0.6, "Optimal", 0.0)]
    rep = BoundReport("toy", 0.7, cells)
    with pytest.warns(RuntimeWarning, match="increases"):
        rep.evaluate()
    assert not rep.monotone[-1.0]["non_increasing"]
    assert rep.monotone[-1.0]["max_increase"] == pytest.approx(0.1)
    assert not rep.improvement[-1.0]["no_worse_than_unfiltered"]


def test_report_serialisation(siso):
    rep = sweep(siso, [-1.0], 2, lower_bound_trials=5)
    back = BoundReport.from_dict(json.loads(rep.to_json()))
    assert back.cells == rep.cells
    assert back.monotone == rep.monotone and back.hinf == rep.hinf
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0] == ["alpha", "N", "gamma", "status", "gap", "seconds"]
    assert len(rows) == 4
    # full double precision survives the text round trip
    assert [float(r[2]) for r in rows[1:]] == [c.gamma for c in rep.cells]


def test_output_scaling_covariance(mimo):
    k = 0.37
    for alpha, N in [(-1.0, 0), (-1.2, 4)]:
        assert compute_bound(mimo.scale_output(k), alpha, N) == pytest.approx(
            k * compute_bound(mimo, alpha, N), rel=1e-6)


def test_small_gain_plain(mimo):
    cert = certify_small_gain(mimo)
    assert cert.method == "L2" and cert.certified
    assert cert.gamma_used == pytest.approx(cert.hinf)
    assert cert.bound is None  # the filtered SDP is skipped


def test_small_gain_needs_filter(mimo):
    cert = certify_small_gain(mimo.scale_output(1 / 0.6))
    assert cert.hinf > 1.0
    assert cert.method == "L2plus"
    assert cert.gamma_used == pytest.approx(0.4981 / 0.6, abs=1e-2)


def test_small_gain_fails(mimo):
    cert = certify_small_gain(mimo.scale_output(1 / 0.4), -1.4, 15)
    assert cert.method == "none" and cert.gamma_used is None
    assert cert.bound > 1.0


def test_small_gain_zero_system():
    ss = StateSpace(-np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)))
    cert = certify_small_gain(ss)
    assert cert.method == "L2" and cert.gamma_used == 0.0


def test_relu_loop_bounded_when_certified(mimo):
    ss = mimo.scale_output(1 / 0.6)
    rng = np.random.default_rng(5)
    for _ in range(3):
        x0 = rng.standard_normal(5)
        traj = relu_feedback_sim(ss, x0, horizon=60.0)
        assert traj.bounded
        assert traj.final_norm < 1e-2 * np.linalg.norm(x0)


def test_relu_open_loop_decays(siso):
    traj = relu_feedback_sim(siso, np.ones(5), horizon=80.0, nonlinearity=lambda z: np.zeros(1))
    assert traj.final_norm < 1e-3
    assert traj.sup_norm >= np.sqrt(5)


def test_relu_zero_state_stays_zero(mimo):
    traj = relu_feedback_sim(mimo, np.zeros(5), horizon=5.0)
    assert np.all(traj.states == 0.0)


def test_relu_divergence_flagged():
    # x' = -x + max(3x, 0) = 2x for x > 0
    ss = StateSpace([[-1.0]], [[1.0]], [[3.0]], [[0.0]])
    traj = relu_feedback_sim(ss, [1.0], horizon=100.0)
    assert traj.diverged and traj.sup_norm > 1e6


def test_relu_feedthrough_loop_solved():
    # z = x + 0.5 w, w = max(z, 0) gives w = 2x for x > 0, so x' = -3x + 2x
    ss = StateSpace([[-3.0]], [[1.0]], [[1.0]], [[0.5]])
    traj = relu_feedback_sim(ss, [1.0], horizon=1.0, dt=1e-3)
    assert traj.states[-1, 0] == pytest.approx(np.exp(-1.0), rel=1e-9)


def test_relu_mixing_shape(mimo):
    with pytest.raises(DimensionMismatch):
        relu_feedback_sim(mimo, np.zeros(5), mixing=np.eye(2))


@pytest.mark.parametrize("alpha,N", [(-1.0, 0), (-1.2, 14), (-1.0, 15)])
def test_certified_bound_slightly_above_optimum(mimo, alpha, N):
    raw = compute_bound(mimo, alpha, N)
    cert = compute_bound(mimo, alpha, N, certified=True)
    assert raw <= cert <= raw * (1 + 1e-6)


def test_sweep_cells_carry_certified_values(siso):
    rep = sweep(siso, [-1.4], 2, lower_bound_trials=0)
    for c in rep.cells:
        assert c.gamma <= c.gamma_certified <= c.gamma * (1 + 1e-6)
