"""Fixed-point iteration for the quasilinear Cattaneo-Christov system.

The map ``T`` sends a trajectory ``U`` to the solution ``V`` of the linear
system whose coefficients and source are frozen along ``U``, started from
the fixed initial data ``U0``.  Iterating ``W_{j+1} = T(W_j)`` from the
constant-in-time extension of ``U0``, the gaps ``a_k = ||W_{k+1} - W_k||_Y``
are measured in the low norm

    ||Z||_Y^2 = sup_t ||Z||_{s-1}^2 + int ||z_2||_s^2 + int ||Z_t||_{s-2}^2,

and certified against the Fibonacci-contraction bounds of :mod:`seqlib`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import linsolve, model, seqlib
from .grid import PeriodicGrid
from .linsolve import Trajectory, TrajectoryCoefficients

__all__ = [
    "QuasisolveError",
    "RangeViolation",
    "InfeasibleHorizon",
    "ContractionFailure",
    "NonConvergence",
    "IterationConfig",
    "YNorm",
    "ContractionTrace",
    "HorizonChoice",
    "MembershipReport",
    "state_box",
    "range_distance",
    "y_norm",
    "apply_T",
    "choose_horizon",
    "iterate",
    "quasilinear_residual",
    "xset_monitor",
]

NORM_MODES = ("full", "perturbation")


class QuasisolveError(ValueError):
    """Invalid configuration for the fixed-point driver."""


class RangeViolation(ArithmeticError):
    """A trajectory left the admissible state neighborhood."""


class InfeasibleHorizon(ArithmeticError):
    """No horizon above the time step satisfies the smallness rules."""


class ContractionFailure(ArithmeticError):
    """The measured contraction ratio reached the cap."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class NonConvergence(ArithmeticError):
    """Iteration cap reached before the gap fell below tolerance."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class IterationConfig:
    """Settings of the fixed-point driver.

    ``g0_lo``/``g0_hi`` bound the initial-data range componentwise (taken
    from ``U0`` when ``None``); ``g2`` defaults to half the distance from
    that box to the boundary of ``{rho > 0, theta > 0}``; ``M`` is filled
    in by :func:`choose_horizon`.
    """

    thermo: model.Thermodynamics = field(default_factory=model.Thermodynamics)
    s: int = 2
    T0: float = 0.1
    dt: float = 2e-4
    tol: float = 1e-11
    k_max: int = 40
    alpha_cap: float = 0.45
    g2: float | None = None
    M: float | None = None
    g0_lo: tuple | None = None
    g0_hi: tuple | None = None
    norm_mode: str = "perturbation"
    window: int = 2
    scheme: str = "ssprk3"
    c_stab: float = 0.2

    def __post_init__(self):
        if self.norm_mode not in NORM_MODES:
            raise QuasisolveError(f"quasisolve: norm_mode must be one of {NORM_MODES}, got {self.norm_mode!r}")
        if not (0.0 < self.alpha_cap < 0.5):
            raise QuasisolveError(f"quasisolve: alpha_cap must lie in (0, 1/2), got {self.alpha_cap}")
        if self.T0 <= 0 or self.dt <= 0:
            raise QuasisolveError(f"quasisolve: need T0 > 0 and dt > 0, got T0 = {self.T0}, dt = {self.dt}")
        if self.tol <= 0 or self.k_max < 1:
            raise QuasisolveError("quasisolve: need tol > 0 and k_max >= 1")
        if self.window < 2:
            raise QuasisolveError(f"quasisolve: window must be >= 2, got {self.window}")

    def check_order(self, d: int):
        s0 = d // 2 + 1
        if self.s < s0 + 1:
            raise QuasisolveError(f"quasisolve: s = {self.s} must satisfy s >= [d/2] + 2 = {s0 + 1} for d = {d}")


# -- state range ---------------------------------------------------------------


def state_box(U0: np.ndarray, cfg: IterationConfig) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise bounds of the initial-data range."""
    N = U0.shape[0]
    axes = tuple(range(1, U0.ndim))
    lo = np.asarray(cfg.g0_lo, dtype=float) if cfg.g0_lo is not None else U0.min(axis=axes)
    hi = np.asarray(cfg.g0_hi, dtype=float) if cfg.g0_hi is not None else U0.max(axis=axes)
    if lo.shape != (N,) or hi.shape != (N,) or np.any(lo > hi):
        raise QuasisolveError("quasisolve: g0 bounds must be N-vectors with lo <= hi")
    if np.any(U0 < lo.reshape((N,) + (1,) * len(axes)) - 1e-15) or np.any(
        U0 > hi.reshape((N,) + (1,) * len(axes)) + 1e-15
    ):
        raise QuasisolveError("quasisolve: initial data outside the configured g0 box")
    return lo, hi


def boundary_distance(lo: np.ndarray, hi: np.ndarray, d: int) -> float:
    """Distance ``g1`` from the box to the boundary of ``{rho > 0, theta > 0}``."""
    L = model.layout(d)
    g1 = min(lo[0], lo[L["theta"]])
    if g1 <= 0:
        raise QuasisolveError("quasisolve: initial data must satisfy rho > 0 and theta > 0")
    return float(g1)


def range_distance(U: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Pointwise Euclidean distance from states to the box ``[lo, hi]``."""
    shape = (lo.size,) + (1,) * (U.ndim - 1)
    below = np.maximum(lo.reshape(shape) - U, 0.0)
    above = np.maximum(U - hi.reshape(shape), 0.0)
    return np.sqrt(np.sum((below + above) ** 2, axis=0))


def _range_monitor(lo, hi, g2):
    def monitor(t, U):
        dist = range_distance(U, lo, hi)
        worst = float(dist.max())
        if worst > g2:
            idx = tuple(int(i) for i in np.unravel_index(int(np.argmax(dist)), dist.shape))
            raise RangeViolation(
                f"quasisolve: state left the g2-neighborhood (g2 = {g2:.6g}) at t = {t:.6g}, "
                f"grid index {idx}, distance {worst:.6g}"
            )

    return monitor


# -- norms ---------------------------------------------------------------------


def _cumtrapz(y, t):
    return linsolve._cumtrapz(np.asarray(y, dtype=float), t)


@dataclass(frozen=True)
class YNorm:
    """Parts of the squared low norm; ``value`` is the norm itself."""

    sup_part: float
    v_part: float
    rate_part: float

    @property
    def total(self) -> float:
        return self.sup_part + self.v_part + self.rate_part

    @property
    def value(self) -> float:
        return math.sqrt(self.total)


def y_norm(Z: np.ndarray, Zt: np.ndarray, times: np.ndarray, grid: PeriodicGrid, partition, s: int) -> YNorm:
    """Low norm of a difference trajectory ``Z`` with time derivative ``Zt``."""
    n, k, p = partition
    sup = max(grid.sobolev_norm_sq(z, s - 1) for z in Z)
    vpart = [grid.sobolev_norm_sq(z[n : n + k], s) for z in Z]
    rpart = [grid.sobolev_norm_sq(r, s - 2) for r in Zt]
    return YNorm(sup, float(_cumtrapz(vpart, times)[-1]), float(_cumtrapz(rpart, times)[-1]))


def _y_gap(A: Trajectory, B: Trajectory, s: int) -> YNorm:
    return y_norm(A.states - B.states, A.rates - B.rates, A.times, A.grid, A.partition, s)


# -- the map T -----------------------------------------------------------------


def _time_grid(T0: float, dt: float) -> np.ndarray:
    nsteps = max(int(math.ceil(T0 / dt - 1e-9)), 1)
    return np.linspace(0.0, T0, nsteps + 1)


def constant_extension(U0: np.ndarray, grid: PeriodicGrid, T0: float, dt: float) -> Trajectory:
    d = grid.dim
    return Trajectory.constant(grid, model.layout(d)["partition"], np.asarray(U0, dtype=float), _time_grid(T0, dt))


def apply_T(
    U: Trajectory,
    cfg: IterationConfig,
    box: tuple[np.ndarray, np.ndarray] | None = None,
    g2: float | None = None,
    delta: float = 0.0,
) -> Trajectory:
    """Solve the linear system frozen along ``U`` with initial data ``U(0)``.

    The result lives on the same time grid as ``U``.  When ``box`` and
    ``g2`` are given, both ``U`` and the solution must stay within distance
    ``g2`` of the box.
    """
    if len(U) < 2:
        raise QuasisolveError("quasisolve: T needs a trajectory with at least two time nodes")
    monitor = None
    if box is not None and g2 is not None:
        lo, hi = box
        check = _range_monitor(lo, hi, g2)
        for t, W in zip(U.times, U.states):
            check(t, W)
        monitor = check
    provider = TrajectoryCoefficients(U, cfg.thermo)
    T0 = float(U.times[-1])
    dt = T0 / (len(U) - 1)
    V = linsolve.solve(
        U.states[0],
        provider,
        T0,
        dt,
        delta=delta,
        scheme=cfg.scheme,
        c_stab=cfg.c_stab,
        monitor=monitor,
    )
    V.states[0] = U.states[0]
    return V


# -- horizon selection ---------------------------------------------------------


@dataclass
class HorizonChoice:
    """Finalized horizon and the fitted constants behind it."""

    T0: float
    M: float
    g1: float
    g2: float
    C1: float
    C2: float
    K1: float
    K2: float
    kappa: float
    u0_norm: float
    source_rate: float
    lipschitz_probe: float
    halvings: int
    reference: np.ndarray | None
    box: tuple
    checks: dict


def _reference(U0: np.ndarray, cfg: IterationConfig) -> np.ndarray | None:
    return linsolve.reference_state(U0) if cfg.norm_mode == "perturbation" else None


def choose_horizon(U0: np.ndarray, grid: PeriodicGrid, cfg: IterationConfig) -> HorizonChoice:
    """Fit ``C1``, ``C2`` from a pilot solve and halve ``T0`` until the smallness rules hold.

    Rules: ``int_0^T0 F^s <= ||U0||_s^2``, ``exp(C2 (T0 + M T0^(1/2))) <= 2``
    and ``kappa_{s-1} T0^(1/2) M <= g2`` with ``M = 2 sqrt(C1) ||U0||_s``.
    """
    d = grid.dim
    cfg.check_order(d)
    U0 = np.asarray(U0, dtype=float)
    box = state_box(U0, cfg)
    g1 = boundary_distance(*box, d)
    g2 = cfg.g2 if cfg.g2 is not None else 0.5 * g1
    if not (0 < g2 < g1):
        raise QuasisolveError(f"quasisolve: g2 = {g2} must satisfy 0 < g2 < g1 = {g1}")
    ref = _reference(U0, cfg)
    P0 = U0 if ref is None else U0 - ref
    s = cfg.s
    u0_norm = math.sqrt(grid.sobolev_norm_sq(P0, s))

    C0 = linsolve.freeze_state(U0, cfg.thermo, grid)
    W0 = constant_extension(U0, grid, cfg.T0, cfg.dt)
    pilot = linsolve.solve(U0, C0, cfg.T0, W0.dt, scheme=cfg.scheme, c_stab=cfg.c_stab)
    trace = linsolve.energy_trace(pilot, C0, s, reference=ref, s=s)
    C1 = trace.C1
    t = trace.times[1:]
    K1 = float(np.max(_cumtrapz(trace.mu0, trace.times)[1:] / t))
    rate_int = trace.diss_ut[1:]
    mu1_int = _cumtrapz(trace.mu1, trace.times)[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        k2 = np.where(rate_int > 0, mu1_int / (np.sqrt(t) * np.sqrt(rate_int)), 0.0)
    K2 = float(np.max(k2)) if k2.size else 0.0
    C2 = C1 * max(K1, K2)
    M = cfg.M if cfg.M is not None else 2.0 * math.sqrt(C1) * u0_norm
    kappa = grid.embedding_constant(s - 1)
    f = C0.f
    n, k, p = C0.partition
    source_rate = (
        grid.sobolev_norm_sq(f[:n], s) + grid.sobolev_norm_sq(f[n : n + k], s - 1) + grid.sobolev_norm_sq(f[n + k :], s)
    )

    # Lipschitz probe of T on the pair (constant extension, pilot solution).
    W1 = apply_T(W0, cfg)
    W2 = apply_T(W1, cfg)
    den = _y_gap(W1, W0, s).value
    probe = _y_gap(W2, W1, s).value / den if den > 0 else 0.0

    T0 = cfg.T0
    halvings = 0
    while True:
        checks = {
            "source": T0 * source_rate <= u0_norm**2,
            "gronwall": math.exp(C2 * (T0 + M * math.sqrt(T0))) <= 2.0,
            "range": kappa * math.sqrt(T0) * M <= g2,
        }
        if all(checks.values()):
            break
        T0 *= 0.5
        halvings += 1
        if T0 < cfg.dt:
            raise InfeasibleHorizon(
                f"quasisolve: horizon fell below dt = {cfg.dt:g} while enforcing "
                f"{[k for k, v in checks.items() if not v]}"
            )
    return HorizonChoice(
        T0, M, g1, g2, C1, C2, K1, K2, kappa, u0_norm, source_rate, probe, halvings, ref, box, checks
    )


# -- iteration -----------------------------------------------------------------


@dataclass
class ContractionTrace:
    """Measured gaps, fitted ratio and the Fibonacci certificate.

    The certificate covers ``a_j`` for ``j >= window - 2`` so that every
    checked index lies in the post-transient window where ``alpha_hat`` is
    fitted.  ``bound`` bounds the full prefix sums of ``a``.
    """

    a: list
    ratios: list
    alpha_hat: float
    window: int
    certificate: list
    partial_sum_bound: float
    converged: bool
    residual_norm: float = math.nan
    iterations: int = 0

    @property
    def cumsum(self) -> np.ndarray:
        return np.cumsum(self.a)

    @property
    def certified(self) -> bool:
        return all(c.passed for c in self.certificate)

    def rows(self):
        cs = self.cumsum
        for k, ak in enumerate(self.a):
            ratio = self.ratios[k] if k < len(self.ratios) else math.nan
            yield (k, ak, ratio, cs[k], self.partial_sum_bound)

    columns = ("k", "a_k", "ratio", "cumsum", "bound")


def _ratios(a: list) -> list:
    out = []
    for k in range(len(a)):
        if k < 2:
            out.append(math.nan)
        else:
            den = a[k - 1] + a[k - 2]
            out.append(a[k] / den if den > 0 else (0.0 if a[k] == 0 else math.inf))
    return out


def _certify(a: list, window: int) -> ContractionTrace:
    ratios = _ratios(a)
    win = [r for k, r in enumerate(ratios) if k >= window and not math.isnan(r)]
    alpha_hat = max(win) if win else 0.0
    j0 = window - 2
    tail = a[j0:]
    head = float(sum(a[:j0]))
    cert: list = []
    bound = math.inf
    if alpha_hat < 0.5:
        alpha0 = min(max(alpha_hat * (1.0 + 1e-12), np.finfo(float).tiny), np.nextafter(0.5, 0.0))
        if len(tail) >= 3:
            seq = seqlib.FibSequence(tail, alpha0)
            cert = seqlib.check_fibonacci_condition(seq)
            if seqlib.first_failure(cert) is None:
                bound = head + float(seqlib.tail_bound(seq).partial_sum_bound)
        else:
            bound = float(sum(a))
    return ContractionTrace(list(a), ratios, alpha_hat, window, cert, bound, False)


def iterate(
    U0: np.ndarray,
    grid: PeriodicGrid,
    cfg: IterationConfig,
    horizon: HorizonChoice | None = None,
    start: Trajectory | None = None,
) -> tuple[Trajectory, ContractionTrace]:
    """Run ``W_{j+1} = T(W_j)`` until ``a_k < tol``.

    ``horizon`` supplies ``T0``, ``g2`` and the state box (from
    :func:`choose_horizon`); without it ``cfg.T0`` is used and the range is
    not monitored.  ``start`` replaces the constant extension as ``W_0``.
    """
    d = grid.dim
    cfg.check_order(d)
    U0 = np.asarray(U0, dtype=float)
    T0 = horizon.T0 if horizon is not None else cfg.T0
    box = horizon.box if horizon is not None else None
    g2 = horizon.g2 if horizon is not None else None
    W = start if start is not None else constant_extension(U0, grid, T0, cfg.dt)
    a: list = []
    for k in range(cfg.k_max):
        W_next = apply_T(W, cfg, box, g2)
        a.append(_y_gap(W_next, W, cfg.s).value)
        W = W_next
        if a[-1] < cfg.tol:
            trace = _certify(a, cfg.window)
            trace.converged = True
            trace.iterations = k + 1
            trace.residual_norm = quasilinear_residual(W, cfg.thermo, cfg.s)
            return W, trace
        if k >= cfg.window:
            r = _ratios(a)[-1]
            if r >= cfg.alpha_cap:
                trace = _certify(a, cfg.window)
                trace.iterations = k + 1
                raise ContractionFailure(
                    f"quasisolve: contraction ratio {r:.4g} >= alpha_cap {cfg.alpha_cap} at k = {k}; "
                    f"try a smaller T0",
                    trace,
                )
    trace = _certify(a, cfg.window)
    trace.iterations = cfg.k_max
    raise NonConvergence(
        f"quasisolve: no convergence in {cfg.k_max} iterations (last gap {a[-1]:.3e}, tol {cfg.tol:g})",
        trace,
    )


def quasilinear_residual(V: Trajectory, thermo: model.Thermodynamics, s: int) -> float:
    """Sup over time of the unsymmetrized quasilinear residual in ``||.||_{s-2}``.

    ``V_t`` is the second-order finite difference of the saved states, so
    the residual also measures how well the iterate solves the equations in
    time.
    """
    g = V.grid
    d = g.dim
    L = model.layout(d)
    sv = L["v"]
    Vt = np.gradient(V.states, V.times, axis=0, edge_order=2) if len(V) > 2 else np.zeros_like(V.states)
    worst = 0.0
    eye = np.eye(d)
    for U, Ut in zip(V.states, Vt):
        rho, v, theta, q = U[0], U[sv], U[L["theta"]], U[L["q"]]
        Uh = g.fft(U)
        grad = np.stack([g.ifft(Uh * g.multiplier(tuple(eye[i].astype(int)))) for i in range(d)])
        r = model.a0_diagonal(rho, theta, thermo, d) * Ut
        for i in range(d):
            r += np.einsum("ab...,b...->a...", model.flux_symbol(rho, v, theta, q, eye[i], thermo), grad[i])
        r += model.relaxation_diagonal(g.shape, d) * U
        vh = Uh[sv]
        for i in range(d):
            for j in range(d):
                e = [0] * d
                e[i] += 1
                e[j] += 1
                ddv = g.ifft(vh * g.multiplier(tuple(e)))
                r[sv] -= np.einsum("ab...,b...->a...", model.viscous_block(theta, eye[i], eye[j], thermo, d), ddv)
        r -= model.nonlinear_fields(U, np.swapaxes(grad, 0, 1), thermo)
        worst = max(worst, g.sobolev_norm_sq(r, max(s - 2, 0)))
    return math.sqrt(worst)


# -- invariant set -------------------------------------------------------------


@dataclass(frozen=True)
class MembershipReport:
    range_distance: float
    g2: float
    range_passed: bool
    budget: float
    budget_limit: float
    budget_passed: bool

    @property
    def range_margin(self) -> float:
        return self.g2 - self.range_distance

    @property
    def budget_margin(self) -> float:
        return self.budget_limit - self.budget

    @property
    def passed(self) -> bool:
        return self.range_passed and self.budget_passed

    def rows(self):
        yield ("range", self.range_distance, self.g2, self.range_margin, int(self.range_passed))
        yield ("budget", self.budget, self.budget_limit, self.budget_margin, int(self.budget_passed))

    columns = ("check", "value", "limit", "margin", "pass")


def xset_monitor(V: Trajectory, horizon: HorizonChoice, s: int) -> MembershipReport:
    """Pointwise range check and high-norm budget of a trajectory with rates."""
    if V.rates is None:
        raise QuasisolveError("quasisolve: membership check needs the time-derivative channel")
    g = V.grid
    lo, hi = horizon.box
    dist = max(float(range_distance(U, lo, hi).max()) for U in V.states)
    P = V.states if horizon.reference is None else V.states - horizon.reference
    n, k, p = V.partition
    sup = max(g.sobolev_norm_sq(U, s) for U in P)
    vint = _cumtrapz([g.sobolev_norm_sq(U[n : n + k], s + 1) for U in P], V.times)[-1]
    rint = _cumtrapz([g.sobolev_norm_sq(r, s - 1) for r in V.rates], V.times)[-1]
    budget = float(sup + vint + rint)
    limit = horizon.M**2
    return MembershipReport(dist, horizon.g2, dist <= horizon.g2, budget, limit, budget <= limit)
