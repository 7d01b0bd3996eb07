"""Fixed-point iteration: horizon choice, contraction trace, invariant set."""

import math

import numpy as np
import pytest

from christov_lab import linsolve, model, quasisolve
from christov_lab.grid import PeriodicGrid
from christov_lab.quasisolve import IterationConfig

N1 = 128


def perturbed(g, amp=1e-3):
    L = model.layout(g.dim)
    U = np.zeros((L["N"],) + g.shape)
    U[0] = 1.0 + amp * np.sin(g.coords[0])
    U[L["theta"]] = 1.0
    return U


@pytest.fixture(scope="module")
def run1d():
    g = PeriodicGrid(1, N1)
    U0 = perturbed(g)
    cfg = IterationConfig()
    horizon = quasisolve.choose_horizon(U0, g, cfg)
    V, trace = quasisolve.iterate(U0, g, cfg, horizon)
    return g, U0, cfg, horizon, V, trace


@pytest.mark.parametrize(
    "kwargs",
    [{"window": 1}, {"alpha_cap": 0.5}, {"alpha_cap": 0.0}, {"norm_mode": "other"}, {"T0": 0.0}, {"tol": 0.0},
     {"k_max": 0}],
)
def test_config_validation(kwargs):
    with pytest.raises(quasisolve.QuasisolveError):
        IterationConfig(**kwargs)


def test_order_must_exceed_embedding_threshold():
    IterationConfig(s=2).check_order(1)
    with pytest.raises(quasisolve.QuasisolveError):
        IterationConfig(s=2).check_order(3)
    IterationConfig(s=3).check_order(3)


def test_state_box_and_distances():
    g = PeriodicGrid(1, 16)
    U0 = perturbed(g, 0.1)
    lo, hi = quasisolve.state_box(U0, IterationConfig())
    assert lo[0] == pytest.approx(0.9, abs=1e-3) and hi[0] == pytest.approx(1.1, abs=1e-3)
    assert quasisolve.boundary_distance(lo, hi, 1) == pytest.approx(lo[0])
    U = np.zeros((4, 1))
    U[:, 0] = hi + np.array([3.0, 4.0, 0.0, 0.0])
    assert quasisolve.range_distance(U, lo, hi)[0] == pytest.approx(5.0)
    with pytest.raises(quasisolve.QuasisolveError):
        quasisolve.state_box(U0, IterationConfig(g0_lo=(1, 0, 1, 0), g0_hi=(2, 0, 2, 0)))


def test_y_norm_parts():
    g = PeriodicGrid(1, 16)
    t = np.linspace(0.0, 1.0, 3)
    Z = np.zeros((3, 4, 16))
    Z[:, 1] = np.sin(g.coords[0])
    Zt = np.zeros_like(Z)
    y = quasisolve.y_norm(Z, Zt, t, g, (1, 1, 2), 2)
    assert y.sup_part == pytest.approx(2 * np.pi)
    assert y.v_part == pytest.approx(3 * np.pi)
    assert y.rate_part == 0.0
    assert y.value == pytest.approx(math.sqrt(5 * np.pi))


def test_constant_equilibrium_is_a_fixed_point():
    g = PeriodicGrid(1, 32)
    U0 = perturbed(g, 0.0)
    U0[1] = 0.3
    cfg = IterationConfig(T0=0.01, dt=1e-3)
    W0 = quasisolve.constant_extension(U0, g, cfg.T0, cfg.dt)
    V = quasisolve.apply_T(W0, cfg)
    np.testing.assert_allclose(V.states, W0.states, atol=1e-15)
    V, trace = quasisolve.iterate(U0, g, cfg)
    assert trace.converged and trace.iterations == 1
    assert trace.a[0] < 1e-15
    assert trace.residual_norm < 1e-12


def test_horizon_baseline(run1d):
    g, U0, cfg, h, V, trace = run1d
    assert h.T0 == pytest.approx(0.025) and h.halvings == 2
    assert h.T0 >= 10 * cfg.dt
    assert all(h.checks.values())
    assert h.C1 == pytest.approx(1.0)
    assert h.g1 == pytest.approx(0.999, rel=1e-6) and h.g2 == pytest.approx(h.g1 / 2)
    assert h.M == pytest.approx(2 * math.sqrt(h.C1) * h.u0_norm)
    assert h.kappa == pytest.approx(g.embedding_constant(cfg.s - 1))
    assert h.kappa * math.sqrt(h.T0) * h.M <= h.g2


def test_horizon_monotone_in_g2():
    g = PeriodicGrid(1, 64)
    U0 = perturbed(g)
    T0s = [quasisolve.choose_horizon(U0, g, IterationConfig(T0=0.1, g2=g2)).T0 for g2 in (1e-4, 2e-4, 4e-4, 8e-4)]
    assert T0s == sorted(T0s)
    assert T0s[0] < T0s[-1]


def test_infeasible_horizon():
    g = PeriodicGrid(1, 32)
    with pytest.raises(quasisolve.InfeasibleHorizon):
        quasisolve.choose_horizon(perturbed(g), g, IterationConfig(T0=0.01, dt=1e-3, g2=1e-9))


def test_full_norm_mode_shrinks_the_horizon():
    # The constant background enters M, so the growth rule forces a much shorter horizon.
    g = PeriodicGrid(1, 32)
    U0 = perturbed(g)
    full = quasisolve.choose_horizon(U0, g, IterationConfig(T0=1e-3, dt=1e-6, norm_mode="full"))
    pert = quasisolve.choose_horizon(U0, g, IterationConfig(T0=1e-3, dt=1e-6))
    assert full.reference is None and full.u0_norm > 1.0
    assert full.M > 1000 * pert.M
    assert full.T0 <= pert.T0 / 16


def test_contraction_trace(run1d):
    g, U0, cfg, h, V, trace = run1d
    assert trace.converged and trace.certified
    assert 0 <= trace.alpha_hat < 0.5
    assert trace.a[-1] < cfg.tol
    assert np.all(trace.cumsum <= trace.partial_sum_bound + 1e-9)
    assert trace.residual_norm < 1e-6
    rows = list(trace.rows())
    assert [r[0] for r in rows] == list(range(len(trace.a)))
    assert math.isnan(rows[0][2]) and math.isnan(rows[1][2])


def test_initial_slice_is_exact(run1d):
    g, U0, cfg, h, V, trace = run1d
    np.testing.assert_array_equal(V.states[0], U0)


def test_fixed_point_residual(run1d):
    g, U0, cfg, h, V, trace = run1d
    TV = quasisolve.apply_T(V, cfg, h.box, h.g2)
    assert quasisolve._y_gap(TV, V, cfg.s).value <= 2 * cfg.tol


def test_uniqueness_probe(run1d):
    g, U0, cfg, h, V, trace = run1d
    C0 = linsolve.freeze_state(U0, cfg.thermo, g)
    start = linsolve.solve(U0, C0, h.T0, V.dt, delta=1e-3)
    W, other = quasisolve.iterate(U0, g, cfg, h, start=start)
    assert other.converged
    assert quasisolve._y_gap(W, V, cfg.s).value < 10 * cfg.tol


def test_membership(run1d):
    g, U0, cfg, h, V, trace = run1d
    rep = quasisolve.xset_monitor(V, h, cfg.s)
    assert rep.range_passed and rep.budget_passed
    assert rep.range_margin > 0 and rep.budget_margin > 0
    scaled = linsolve.Trajectory(V.grid, V.partition, V.times, 10 * V.states, 10 * V.rates)
    bad = quasisolve.xset_monitor(scaled, h, cfg.s)
    assert not bad.budget_passed and bad.budget_margin < 0


def test_membership_of_equilibrium_has_full_margin():
    g = PeriodicGrid(1, 32)
    U0 = perturbed(g, 0.0)
    cfg = IterationConfig(T0=0.01, dt=1e-3, M=1.0)
    h = quasisolve.choose_horizon(U0, g, cfg)
    W = quasisolve.constant_extension(U0, g, h.T0, cfg.dt)
    rep = quasisolve.xset_monitor(W, h, cfg.s)
    assert rep.passed
    assert rep.budget_margin == pytest.approx(1.0)


def test_range_violation_names_time_and_index():
    g = PeriodicGrid(1, 32)
    U0 = perturbed(g, 1e-3)
    cfg = IterationConfig(T0=0.01, dt=1e-3)
    lo, hi = quasisolve.state_box(U0, cfg)
    W0 = quasisolve.constant_extension(U0, g, cfg.T0, cfg.dt)
    with pytest.raises(quasisolve.RangeViolation, match=r"grid index \(\d+,\)"):
        quasisolve.apply_T(W0, cfg, (lo, hi), 1e-12)


def test_contraction_failure_carries_trace():
    g = PeriodicGrid(1, 32)
    cfg = IterationConfig(T0=0.01, dt=1e-3, tol=1e-300, alpha_cap=1e-30)
    with pytest.raises(quasisolve.ContractionFailure) as info:
        quasisolve.iterate(perturbed(g), g, cfg)
    assert info.value.trace is not None and len(info.value.trace.a) == 3


def test_non_convergence_carries_trace():
    g = PeriodicGrid(1, 32)
    cfg = IterationConfig(T0=0.01, dt=1e-3, tol=1e-300, k_max=2)
    with pytest.raises(quasisolve.NonConvergence) as info:
        quasisolve.iterate(perturbed(g), g, cfg)
    assert len(info.value.trace.a) == 2 and not info.value.trace.converged


def test_certificate_window():
    a = [1.0, 0.5, 0.1, 0.01, 0.001]
    tr = quasisolve._certify(a, 3)
    assert tr.alpha_hat == pytest.approx(max(0.01 / 0.6, 0.001 / 0.11))
    assert [c.index for c in tr.certificate] == [2, 3]
    assert tr.partial_sum_bound >= sum(a)
    big = quasisolve._certify([1.0, 1.0, 1.5, 2.0], 2)
    assert big.alpha_hat > 0.5 and big.certificate == [] and big.partial_sum_bound == math.inf


def test_quasilinear_residual_of_equilibrium_is_zero():
    g = PeriodicGrid(2, 8)
    U0 = np.zeros((6,) + g.shape)
    U0[0], U0[1], U0[3] = 1.0, 0.5, 2.0
    W = quasisolve.constant_extension(U0, g, 0.01, 1e-3)
    assert quasisolve.quasilinear_residual(W, model.Thermodynamics(), 3) < 1e-10
