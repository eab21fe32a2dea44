import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paramcont.continuation import (
    ParcConfig,
    npc_run,
    parc_correct,
    parc_predict,
    parc_run,
    read_trace_csv,
    solve_fixed_lambda,
)
from paramcont.homotopy import HomotopySpec
from paramcont.models import autoencoder, init_params, make_objective
from paramcont.param_space import HomotopyPoint, Normalization, Secant
from paramcont.solvers import ConvergenceCriteria, SolverConfig, run_to_convergence
from paramcont.testbed import pseudo_arclength_spacing


def _ae_objective(small_data, kind="h-sigmoid"):
    train, _ = small_data
    model = autoencoder(HomotopySpec(kind))
    return make_objective(model, train.inputs, train.inputs), init_params(model, seed=1)


def test_predict_examples():
    prev = HomotopyPoint(np.array([0.0]), 0.0)
    curr = HomotopyPoint(np.array([0.6]), 0.8)
    p = parc_predict(prev, curr, 0.1, Normalization.JOINT)
    assert np.allclose(p.theta, [0.66]) and p.lam == pytest.approx(0.88)
    q = parc_predict(prev, curr, 0.1, Normalization.PER_BLOCK)
    assert np.allclose(q.theta, [0.7]) and q.lam == pytest.approx(0.9)
    r = parc_predict(prev, curr, 0.0)
    assert np.array_equal(r.theta, curr.theta) and r.lam == curr.lam


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(-1, 1),
       st.floats(1e-3, 1.0))
def test_predicted_step_has_length_ds(delta, dlam, ds):
    prev = HomotopyPoint(np.zeros(3), 0.0)
    curr = HomotopyPoint(np.array(delta), dlam)
    if np.hypot(np.linalg.norm(delta), dlam) < 1e-6:
        return
    p = parc_predict(prev, curr, ds)
    step = np.append(p.theta - curr.theta, p.lam - curr.lam)
    assert np.linalg.norm(step) == pytest.approx(ds, rel=1e-9)


def test_zero_gamma_frozen_lambda_matches_fixed_solve(small_data):
    obj, theta0 = _ae_objective(small_data)
    crit = ConvergenceCriteria(30, None)
    pred = HomotopyPoint(theta0, 0.4)
    sec = Secant(np.ones_like(theta0) / np.sqrt(theta0.size + 1), 1 / np.sqrt(theta0.size + 1))
    point, _ = parc_correct(obj, pred, sec, gamma=0.0, criteria=crit, freeze_lambda=True)
    theta, _, _ = solve_fixed_lambda(obj, theta0, 0.4, criteria=crit)
    assert point.lam == 0.4
    assert np.allclose(point.theta, theta, atol=1e-12)


def test_zero_loss_leaves_point_unchanged():
    def flat(theta, lam):
        return 0.0, np.zeros_like(theta), 0.0
    pred = HomotopyPoint(np.array([1.0, 2.0]), 0.3)
    sec = Secant(np.array([0.6, 0.0]), 0.8)
    point, diag = parc_correct(flat, pred, sec, criteria=ConvergenceCriteria(20, None))
    assert np.array_equal(point.theta, pred.theta) and point.lam == pred.lam
    assert diag.penalty_residual == 0.0


def test_npc_without_homotopy_is_plain_adam(small_data):
    obj, theta0 = _ae_objective(small_data, kind="none")
    solver = SolverConfig(reset_moments=False)
    trace = npc_run(obj, theta0, 3, solver, ConvergenceCriteria(10, None))
    theta, _ = run_to_convergence(lambda t: obj(t, 1.0)[:2], theta0,
                                  ConvergenceCriteria(40, None), solver)
    assert np.array_equal(trace.final.point.theta, theta)


def test_npc_schedule(small_data):
    obj, theta0 = _ae_objective(small_data)
    trace = npc_run(obj, theta0, 7, criteria=ConvergenceCriteria(5, None))
    assert np.array_equal(trace.lambdas, np.arange(8) / 7)
    assert trace.lambdas[0] == 0.0 and trace.lambdas[-1] == 1.0
    assert np.all(np.diff(trace.arclengths) > 0)


def test_npc_rejects_bad_n():
    with pytest.raises(ValueError):
        npc_run(lambda t, l: (0.0, t, 0.0), np.zeros(1), 0)


def test_npc_budget(small_data):
    obj, theta0 = _ae_objective(small_data)
    trace = npc_run(obj, theta0, 4, criteria=ConvergenceCriteria(10, None), budget=23)
    assert trace.total_steps == 23


@pytest.mark.parametrize("mode", ["joint", "paper_literal"])
def test_parc_trace_invariants(small_data, mode):
    obj, theta0 = _ae_objective(small_data)
    cfg = ParcConfig(ds=0.05, normalization_mode=mode, max_steps=400)
    trace = parc_run(obj, theta0, cfg, criteria=ConvergenceCriteria(15, None),
                     budget=3000, continuation_budget=1500)
    assert trace.lambdas[0] == 0.0
    assert trace.lambdas[-1] == 1.0
    assert np.all(np.diff(trace.arclengths) > 0)
    assert trace.total_steps <= 3000


def test_parc_step_projects_to_ds(small_data):
    obj, theta0 = _ae_objective(small_data)
    ds = 0.05
    trace = parc_run(obj, theta0, ParcConfig(ds=ds, max_steps=20),
                     criteria=ConvergenceCriteria(20, None), budget=400,
                     continuation_budget=300)
    # secant steps only: drop start, bootstrap and the final pinned point
    proj = pseudo_arclength_spacing(trace)[:-1]
    resid = np.array([p.penalty_residual for p in trace.points[2:-1]])
    assert len(proj) > 3
    assert np.all(np.abs(proj - ds) <= resid + 1e-9)
    assert np.all(proj > 0)


def test_forced_lambda_secant_advances_lambda(small_data):
    obj, theta0 = _ae_objective(small_data)
    cfg = ParcConfig(ds=0.1, forced_secant="lambda", freeze_lambda=True, gamma=0.0)
    trace = parc_run(obj, theta0, cfg, criteria=ConvergenceCriteria(5, None))
    lams = trace.lambdas
    assert np.allclose(np.diff(lams[1:-1]), 0.1)
    assert lams[-1] == 1.0


def test_warm_start_ratio(small_data):
    obj, theta0 = _ae_objective(small_data)
    trace = npc_run(obj, theta0, 10, criteria=ConvergenceCriteria(100, None))
    kappa = trace.warm_start_ratios()
    assert np.median(kappa) < 10


def test_csv_round_trip(tmp_path, small_data):
    obj, theta0 = _ae_objective(small_data)
    trace = npc_run(obj, theta0, 3, criteria=ConvergenceCriteria(3, None))
    path = trace.to_csv(tmp_path / "trace.csv", config={"n_steps": 3}, seed=7)
    rows = read_trace_csv(path)
    assert [r["lambda"] for r in rows] == list(trace.lambdas)
    assert [r["loss"] for r in rows] == list(trace.losses)
    assert path.with_suffix(".json").exists()


def test_config_validation():
    with pytest.raises(ValueError):
        ParcConfig(ds=0.0)
    with pytest.raises(ValueError):
        ParcConfig(gamma=-1.0)
    assert ParcConfig().as_dict()["normalization_mode"] == "joint"


def test_lambda_schedule_validation():
    with pytest.raises(ValueError):
        ParcConfig(lambda_schedule=(0.0, 0.5, 1.0))
    with pytest.raises(ValueError):
        ParcConfig(forced_secant="lambda", lambda_schedule=(0.0, 0.6, 0.5, 1.0))
    with pytest.raises(ValueError):
        ParcConfig(forced_secant="lambda", lambda_schedule=(0.1, 1.0))
    cfg = ParcConfig(forced_secant="lambda", lambda_schedule=[0, 0.25, 1])
    assert cfg.lambda_schedule == (0.0, 0.25, 1.0)
