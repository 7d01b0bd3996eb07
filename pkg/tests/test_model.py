"""Symbols, structural hypotheses, eigenstructure and nonlinear terms."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from christov_lab import model
from christov_lab.model import PointState, Thermodynamics

GOLDEN = (1 + math.sqrt(5)) / 2


@pytest.mark.parametrize(
    "kwargs,needle",
    [
        ({"R": 0.0}, "R > 0"),
        ({"c_v": -1.0}, "c_v > 0"),
        ({"kappa": 0.0}, "kappa > 0"),
        ({"tau": -2.0}, "tau > 0"),
        ({"mu": -1.0}, "mu >= 0"),
        ({"mu": 1.0, "lam": -1.0}, "(2/3) mu + lambda > 0"),
        ({"mu": 0.0, "lam": 1.0}, "mu > 0 in viscous mode"),
    ],
)
def test_thermodynamics_names_the_failing_inequality(kwargs, needle):
    with pytest.raises(model.ThermoError) as info:
        Thermodynamics(**kwargs)
    assert needle in str(info.value)


def test_inviscid_thermodynamics_allowed():
    assert not Thermodynamics(mu=0.0, lam=0.0).viscous


def test_point_state_validation():
    with pytest.raises(model.DomainError):
        PointState(0.0, [0.0], 1.0, [0.0])
    with pytest.raises(model.DomainError):
        PointState(1.0, [0.0], -1.0, [0.0])
    with pytest.raises(model.ModelError):
        PointState(1.0, [0.0, 0.0], 1.0, [0.0])
    s = PointState(2.0, [1.0, 2.0], 3.0, [4.0, 5.0])
    assert s.dim == 2
    assert PointState.from_vector(s.as_vector()) == s


def test_direction_validation():
    s = PointState(1.0, [0, 0, 0], 1.0, [0, 0, 0])
    th = Thermodynamics()
    with pytest.raises(model.DirectionError):
        model.eval_symbols(s, [0, 0, 0], th)
    with pytest.raises(model.DirectionError):
        model.eval_symbols(s, [1, 1, 0], th)
    with pytest.raises(model.DirectionError):
        model.eval_symbols(s, [1, 0], th)


def test_q_block_in_one_dimension_vanishes():
    np.testing.assert_array_equal(model.q_block(np.array([2.5]), np.array([1.0])), [[0.0]])


def test_q_block_hand_values():
    Q = model.q_block(np.array([1.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))
    np.testing.assert_array_equal(Q, np.diag([0.0, -1.0, -1.0]))
    Q = model.q_block(np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    np.testing.assert_array_equal(Q, [[0, 1, 0], [0, 0, 0], [0, 0, 0]])


def test_one_dimensional_symmetrized_symbol_by_hand():
    th = Thermodynamics(R=2.0, c_v=3.0, kappa=0.5, tau=0.7)
    rho, v, theta, q = 1.3, 0.4, 0.9, 0.2
    sym = model.symmetrize(model.eval_symbols(PointState(rho, [v], theta, [q]), [1.0], th))
    p_rho, p_theta, e_theta = th.R * theta, th.R * rho, th.c_v
    kt = th.kappa * theta
    expected = np.array(
        [
            [p_rho / rho * v, p_rho, 0, 0],
            [p_rho, rho * v, p_theta, 0],
            [0, p_theta, rho * e_theta * v / theta, 1 / theta],
            [0, 0, 1 / theta, th.tau * v / kt],
        ]
    )
    np.testing.assert_allclose(sym.a_xi, expected, rtol=1e-15)
    np.testing.assert_allclose(sym.a0, np.diag([p_rho / rho, rho, rho * e_theta / theta, th.tau / kt]), rtol=1e-15)
    np.testing.assert_allclose(sym.d_mat, np.diag([0, 0, 0, 1 / kt]), rtol=1e-15)


def test_viscous_block_eigenvalues():
    th = Thermodynamics(mu=2.0, lam=0.5)
    xi = np.array([0.6, 0.8, 0.0])
    B = model.viscous_block(1.0, xi, xi, th, 3)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(B)), [2.0, 2.0, 4.5], rtol=1e-14)


def test_viscosity_exponent_scales_both_viscosities():
    th = Thermodynamics(mu=1.0, lam=0.5, viscosity_exponent=0.5)
    c = model.closure(1.0, 4.0, th)
    assert c["mu"] == pytest.approx(2.0) and c["lam"] == pytest.approx(1.0)
    assert c["mu_theta"] == pytest.approx(0.25) and c["lam_theta"] == pytest.approx(0.125)


states = st.builds(
    lambda rho, theta, v, q: PointState(rho, v, theta, q),
    st.floats(0.2, 5.0),
    st.floats(0.2, 5.0),
    st.lists(st.floats(-3, 3), min_size=3, max_size=3),
    st.lists(st.floats(-3, 3), min_size=3, max_size=3),
)
directions = st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda x: np.linalg.norm(x) > 0.1)


@settings(max_examples=60, deadline=None)
@given(state=states, xi=directions, mu=st.floats(0.1, 3.0), lam=st.floats(-0.05, 3.0))
def test_hypotheses_hold_on_random_states(state, xi, mu, lam):
    th = Thermodynamics(mu=mu, lam=lam, kappa=1.3, tau=0.8, R=0.7, c_v=2.1)
    xi = np.asarray(xi) / np.linalg.norm(xi)
    rep = model.check_hypotheses(model.eval_symbols(state, xi, th), rel_tol=1e-10)
    assert rep.passed, [it for it in rep.items if not it.passed]
    assert rep["B0 min eigenvalue"].expected == pytest.approx(min(2 * mu + lam, mu))


def test_coupling_blocks_are_not_symmetric_when_q_nonzero():
    s = PointState(1.0, [0, 0, 0], 1.0, [1, 0, 0])
    sym = model.symmetrize(model.eval_symbols(s, [0.6, 0.8, 0.0], Thermodynamics()))
    assert np.linalg.norm(sym.block("a_xi", 3, 2) - sym.block("a_xi", 2, 3).T) > 0.1


def test_one_dimensional_spectrum_is_golden():
    # rho = theta = R = c_v = kappa = tau = 1: eigenvalues +-phi, +-1/phi.
    rep = model.eigen_analysis(PointState(1.0, [0.0], 1.0, [0.0]), [1.0], Thermodynamics())
    np.testing.assert_allclose(np.sort(rep.eigenvalues.real), [-GOLDEN, -1 / GOLDEN, 1 / GOLDEN, GOLDEN], rtol=1e-13)
    assert rep.diagonalizable and rep.max_imag == 0.0


def test_velocity_shifts_spectrum():
    v = 0.3
    rep = model.eigen_analysis(PointState(1.0, [v], 1.0, [0.0]), [1.0], Thermodynamics())
    np.testing.assert_allclose(np.sort(rep.eigenvalues.real) - v, [-GOLDEN, -1 / GOLDEN, 1 / GOLDEN, GOLDEN], rtol=1e-12)


def test_heat_flux_parallel_to_direction_is_defective():
    rep = model.eigen_analysis(PointState(1.0, [0, 0, 0], 1.0, [1, 0, 0]), [1, 0, 0], Thermodynamics())
    assert rep.verdict == "non-diagonalizable"
    zero = [c for c in rep.clusters if abs(c.value) < 1e-9][0]
    assert (zero.algebraic, zero.geometric) == (4, 2)
    assert "verdict: non-diagonalizable" in rep.text()


def test_oblique_direction_is_defective():
    rep = model.eigen_analysis(PointState(1.0, [0, 0, 0], 1.0, [1, 0, 0]), [0.6, 0.8, 0.0], Thermodynamics())
    assert not rep.diagonalizable


def test_heat_flux_orthogonal_to_direction_is_diagonalizable():
    rep = model.eigen_analysis(PointState(1.0, [0, 0, 0], 1.0, [1, 0, 0]), [0, 1, 0], Thermodynamics())
    zero = [c for c in rep.clusters if abs(c.value) < 1e-9][0]
    assert (zero.algebraic, zero.geometric) == (4, 4)
    assert rep.diagonalizable


def test_zero_heat_flux_is_diagonalizable():
    for xi in ([1, 0, 0], [0, 1, 0], [0.6, 0.0, 0.8]):
        rep = model.eigen_analysis(PointState(1.0, [0, 0, 0], 1.0, [0, 0, 0]), xi, Thermodynamics())
        assert rep.diagonalizable


def test_nonlinear_terms_vanish_without_gradients():
    s = PointState(1.2, [0.3, -0.1], 0.8, [0.5, 0.2])
    nt = model.nonlinear_terms(s, np.zeros((6, 2)), Thermodynamics(viscosity_exponent=0.5))
    np.testing.assert_array_equal(nt.F, 0.0)


def test_nonlinear_terms_one_dimensional_by_hand():
    mu, lam, e = 1.5, 0.4, 0.5
    th = Thermodynamics(mu=mu, lam=lam, viscosity_exponent=e)
    theta, vx, thx = 2.0, 0.7, -0.3
    grad = np.array([[0.1], [vx], [thx], [0.2]])
    nt = model.nonlinear_terms(PointState(1.0, [0.0], theta, [0.0]), grad, th)
    s = theta**e
    ds = e * theta ** (e - 1)
    # Momentum: v_x (lam' + 2 mu') theta_x; energy: (lam + 2 mu) v_x^2.
    assert nt.F[1] == pytest.approx(vx * (lam + 2 * mu) * ds * thx, rel=1e-14)
    assert nt.F[2] == pytest.approx((lam + 2 * mu) * s * vx**2, rel=1e-14)
    assert nt.F[0] == 0.0 and nt.F[3] == 0.0
    assert nt.f3[0] == pytest.approx(nt.F[2] / theta, rel=1e-14)


def test_nonlinear_terms_shear_flow_dissipation():
    # v = (y, 0, 0): strain has two off-diagonal ones, dissipation mu.
    th = Thermodynamics(mu=2.0, lam=0.3)
    grad = np.zeros((8, 3))
    grad[1, 1] = 1.0
    nt = model.nonlinear_terms(PointState(1.0, [0, 0, 0], 1.0, [0, 0, 0]), grad, th)
    assert nt.F[4] == pytest.approx(2.0, rel=1e-14)


def test_nonlinear_terms_shape_check():
    with pytest.raises(model.ModelError):
        model.nonlinear_terms(PointState(1.0, [0.0], 1.0, [0.0]), np.zeros((4, 2)), Thermodynamics())
