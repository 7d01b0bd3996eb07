"""Linear coupled hyperbolic-parabolic systems on the periodic box.

The unknown ``U = (u, v, w)`` is split as ``n + k + p`` components.  The
system is

    A0 U_t + A^i d_i U - B^{ij} d_i d_j v + D0 w = f + delta Lambda Laplace(U),

where ``B^{ij}`` acts on the ``v`` block only, ``D0`` on the ``w`` block
only, and ``Lambda = diag(I_n, 0_k, I_p)`` selects the components that get
the artificial viscosity ``delta``.

Coefficients are given per grid point by :class:`FrozenCoefficients`; a
coefficient provider maps time to coefficients so that backgrounds may vary
in time.  Time stepping is explicit (forward Euler or the three-stage
strong-stability-preserving Runge-Kutta scheme) with an optional
semi-implicit variant in one dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import model
from .grid import PeriodicGrid, multi_indices

__all__ = [
    "LinsolveError",
    "StabilityError",
    "SolverNumericError",
    "EnergyError",
    "FrozenCoefficients",
    "Regularization",
    "Trajectory",
    "StaticCoefficients",
    "TrajectoryCoefficients",
    "freeze_coefficients",
    "freeze_state",
    "reference_state",
    "rhs",
    "step",
    "stable_dt",
    "solve",
    "pde_residual",
    "EnergyTrace",
    "energy_trace",
    "fit_gronwall_constant",
    "CouplingRow",
    "demo_coupling_1d",
]

SCHEMES = ("euler", "ssprk3", "imex")


class LinsolveError(ValueError):
    """Invalid input to the linear solver."""


class StabilityError(LinsolveError):
    """Time step violates the stability rule."""


class SolverNumericError(ArithmeticError):
    """Singular coefficients or a blown-up solution."""


class EnergyError(ArithmeticError):
    """No admissible Gronwall constant in the search range."""


@dataclass(frozen=True, eq=False)
class FrozenCoefficients:
    """Pointwise coefficients of the linear system at one instant.

    Shapes (``S`` is the grid shape, ``N = n + k + p``):
    ``a0`` ``(N, N, *S)``, ``a`` ``(d, N, N, *S)``, ``b`` ``(d, d, k, k, *S)``,
    ``d0`` ``(p, p, *S)``, ``f`` ``(N, *S)``.
    """

    grid: PeriodicGrid
    partition: tuple
    a0: np.ndarray
    a: np.ndarray
    b: np.ndarray
    d0: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        n, k, p = self.partition
        N = n + k + p
        S = self.grid.shape
        d = self.grid.dim
        expect = {
            "a0": (N, N) + S,
            "a": (d, N, N) + S,
            "b": (d, d, k, k) + S,
            "d0": (p, p) + S,
            "f": (N,) + S,
        }
        for name, shape in expect.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                try:
                    arr = np.broadcast_to(arr, shape)
                except ValueError:
                    raise LinsolveError(
                        f"linsolve: coefficient {name} has shape {arr.shape}, expected {shape}"
                    ) from None
            if not np.all(np.isfinite(arr)):
                raise SolverNumericError(f"linsolve: coefficient {name} has non-finite entries")
            object.__setattr__(self, name, arr)

    @property
    def N(self) -> int:
        return sum(self.partition)

    @property
    def slices(self) -> tuple[slice, slice, slice]:
        n, k, p = self.partition
        return slice(0, n), slice(n, n + k), slice(n + k, n + k + p)

    def a0_block(self, j: int) -> np.ndarray:
        s = self.slices[j - 1]
        return self.a0[s, s]

    def a_block(self, i: int, l: int, m: int) -> np.ndarray:
        """Block ``A^i_{lm}`` with ``i`` 1-based spatial index."""
        return self.a[i - 1][self.slices[l - 1], self.slices[m - 1]]

    @property
    def a0inv(self) -> np.ndarray:
        cache = self.__dict__.get("_a0inv")
        if cache is None:
            mats = np.moveaxis(self.a0, (0, 1), (-2, -1))
            try:
                inv = np.linalg.inv(mats)
            except np.linalg.LinAlgError as exc:
                raise SolverNumericError(f"linsolve: singular A0 somewhere on the grid: {exc}") from exc
            if not np.all(np.isfinite(inv)):
                raise SolverNumericError("linsolve: A0 inversion produced non-finite entries")
            cache = np.moveaxis(inv, (-2, -1), (0, 1))
            self.__dict__["_a0inv"] = cache
        return cache

    def check_a0(self) -> float:
        """Smallest pointwise eigenvalue of the symmetric part of ``A0``."""
        mats = np.moveaxis(self.a0, (0, 1), (-2, -1))
        return float(np.min(np.linalg.eigvalsh((mats + np.swapaxes(mats, -1, -2)) / 2)))


@dataclass(frozen=True)
class Regularization:
    """Artificial viscosity ``delta Lambda Laplace`` with ``0 <= delta < 1``."""

    delta: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.delta < 1.0):
            raise LinsolveError(f"linsolve: delta must satisfy 0 <= delta < 1, got {self.delta}")

    @staticmethod
    def lambda_mask(partition: Sequence[int]) -> np.ndarray:
        n, k, p = partition
        return np.concatenate([np.ones(n), np.zeros(k), np.ones(p)])


@dataclass(eq=False)
class Trajectory:
    """States saved at uniformly spaced times.

    ``rates`` holds ``U_t`` evaluated from the PDE operator at each saved
    state (``None`` when not available).
    """

    grid: PeriodicGrid
    partition: tuple
    times: np.ndarray
    states: np.ndarray
    rates: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.times.ndim != 1 or self.times.size == 0:
            raise LinsolveError("linsolve: trajectory needs a non-empty 1-D time array")
        if self.states.shape[0] != self.times.size:
            raise LinsolveError("linsolve: trajectory times and states disagree in length")

    def __len__(self) -> int:
        return self.times.size

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def state_at(self, t: float) -> np.ndarray:
        """Linear interpolation in time."""
        ts = self.times
        if t <= ts[0]:
            return self.states[0]
        if t >= ts[-1]:
            return self.states[-1]
        j = int(np.searchsorted(ts, t, side="right")) - 1
        j = min(max(j, 0), ts.size - 2)
        t0, t1 = ts[j], ts[j + 1]
        if t == t0:
            return self.states[j]
        th = (t - t0) / (t1 - t0)
        return (1.0 - th) * self.states[j] + th * self.states[j + 1]

    @classmethod
    def constant(cls, grid, partition, state: np.ndarray, times: np.ndarray) -> "Trajectory":
        times = np.asarray(times, dtype=float)
        states = np.broadcast_to(state, (times.size,) + state.shape).copy()
        return cls(grid, tuple(partition), times, states, np.zeros_like(states))


class StaticCoefficients:
    """Coefficients that do not depend on time."""

    def __init__(self, coeffs: FrozenCoefficients):
        self.coeffs = coeffs
        self.grid = coeffs.grid
        self.partition = coeffs.partition
        self.time_dependent = False

    def at(self, t: float) -> FrozenCoefficients:
        return self.coeffs


class TrajectoryCoefficients:
    """Coefficients of the model frozen along a background trajectory.

    The background is interpolated linearly in time between saved states,
    then the symmetrized model coefficients are evaluated at it.
    """

    def __init__(self, background: Trajectory, thermo: model.Thermodynamics, cache_size: int = 4):
        self.background = background
        self.thermo = thermo
        self.grid = background.grid
        self.partition = background.partition
        self.time_dependent = len(background) > 1
        self._cache: dict = {}
        self._cache_size = cache_size

    def at(self, t: float) -> FrozenCoefficients:
        key = float(t)
        hit = self._cache.get(key)
        if hit is None:
            hit = freeze_state(self.background.state_at(key), self.thermo, self.grid)
            if len(self._cache) >= self._cache_size:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = hit
        return hit


def reference_state(U0: np.ndarray) -> np.ndarray:
    """Spatial mean of ``U0`` with the heat-flux components set to zero.

    This constant state solves the homogeneous model system exactly, so
    perturbations about it satisfy the same linear equations.
    """
    U0 = np.asarray(U0, dtype=float)
    N = U0.shape[0]
    d = (N - 2) // 2
    grid_axes = tuple(range(1, U0.ndim))
    ref = U0.mean(axis=grid_axes)
    ref[model.layout(d)["q"]] = 0.0
    return ref.reshape((N,) + (1,) * len(grid_axes))


def freeze_state(U: np.ndarray, thermo: model.Thermodynamics, grid: PeriodicGrid) -> FrozenCoefficients:
    """Symmetrized model coefficients at the state field ``U`` of shape ``(N, *S)``."""
    U = np.asarray(U, dtype=float)
    d = grid.dim
    L = model.layout(d)
    if U.shape != (L["N"],) + grid.shape:
        raise LinsolveError(f"linsolve: state field has shape {U.shape}, expected {(L['N'],) + grid.shape}")
    rho, v, theta, q = U[0], U[L["v"]], U[L["theta"]], U[L["q"]]
    model._check_domain(rho, theta)
    n, k, p = L["partition"]
    N = L["N"]
    S = model.symmetrizer_diagonal(rho, theta, thermo, d)
    eyeN = np.eye(N).reshape((N, N) + (1,) * d)
    a0 = eyeN * (S * model.a0_diagonal(rho, theta, thermo, d))[None]
    a = np.stack([S[:, None] * model.flux_symbol(rho, v, theta, q, np.eye(d)[i], thermo) for i in range(d)])
    b = np.empty((d, d, k, k) + grid.shape)
    for i in range(d):
        for j in range(d):
            b[i, j] = model.viscous_block(theta, np.eye(d)[i], np.eye(d)[j], thermo, d)
    relax = S * model.relaxation_diagonal(grid.shape, d)
    eyep = np.eye(p).reshape((p, p) + (1,) * d)
    d0 = eyep * relax[n + k :][None]
    grad = np.swapaxes(grid.gradient(U), 0, 1)
    f = S * model.nonlinear_fields(U, grad, thermo)
    return FrozenCoefficients(grid, L["partition"], a0, a, b, d0, f)


def freeze_coefficients(background, thermo: model.Thermodynamics, grid: PeriodicGrid | None = None):
    """Coefficients along a background.

    A :class:`Trajectory` yields one :class:`FrozenCoefficients` per saved
    time; a single state field yields one.
    """
    if isinstance(background, Trajectory):
        return [freeze_state(U, thermo, background.grid) for U in background.states]
    if grid is None:
        raise LinsolveError("linsolve: a grid is required to freeze a single state field")
    return freeze_state(background, thermo, grid)


def _matvec(M: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("ab...,b...->a...", M, x)


def rhs(U: np.ndarray, C: FrozenCoefficients, delta: float = 0.0, split: bool = False):
    """Time derivative ``U_t`` given by the PDE operator.

    With ``split=True`` returns ``(A0 U_t, A0^{-1})`` so callers can reuse
    the operator without the final inversion.
    """
    g = C.grid
    d = g.dim
    su, sv, sw = C.slices
    Uh = g.fft(U)
    r = C.f.copy()
    for i in range(d):
        e = tuple(1 if j == i else 0 for j in range(d))
        dU = g.ifft(Uh * g.multiplier(e))
        r -= _matvec(C.a[i], dU)
    if C.partition[1]:
        vh = Uh[sv]
        for i in range(d):
            for j in range(i, d):
                e = [0] * d
                e[i] += 1
                e[j] += 1
                ddv = g.ifft(vh * g.multiplier(tuple(e)))
                Bij = C.b[i, j] if i == j else C.b[i, j] + C.b[j, i]
                r[sv] += _matvec(Bij, ddv)
    if C.partition[2]:
        r[sw] -= _matvec(C.d0, U[sw])
    if delta:
        mask = Regularization.lambda_mask(C.partition).astype(bool)
        lap = sum(g.multiplier(tuple(2 if j == i else 0 for j in range(d))) for i in range(d))
        r[mask] += delta * g.ifft(Uh[mask] * lap)
    if split:
        return r
    return _matvec(C.a0inv, r)


def _max_diffusive_rate(C: FrozenCoefficients, delta: float) -> float:
    """Largest pointwise eigenvalue of ``A0^{-1}(B(xi) + delta Lambda)`` over unit ``xi``."""
    d = C.grid.dim
    n, k, p = C.partition
    inv = C.a0inv
    best = 0.0
    if k:
        dirs = list(np.eye(d))
        if d > 1:
            dirs.append(np.ones(d) / math.sqrt(d))
        sv = C.slices[1]
        ainv_v = np.moveaxis(inv[sv, sv], (0, 1), (-2, -1))
        for xi in dirs:
            Bxi = np.einsum("i,j,ij...->...", xi, xi, C.b)
            Bm = np.moveaxis(Bxi, (0, 1), (-2, -1))
            lam = np.linalg.eigvals(ainv_v @ Bm)
            best = max(best, float(np.max(lam.real)))
    if delta:
        mask = Regularization.lambda_mask(C.partition).astype(bool)
        if mask.any():
            diag = np.einsum("aa...->a...", inv)[mask]
            best += delta * float(np.max(np.abs(diag)))
    return best


def _max_wave_speed(C: FrozenCoefficients) -> float:
    d = C.grid.dim
    inv = np.moveaxis(C.a0inv, (0, 1), (-2, -1))
    best = 0.0
    for i in range(d):
        A = np.moveaxis(C.a[i], (0, 1), (-2, -1))
        best = max(best, float(np.max(np.abs(np.linalg.eigvals(inv @ A)))))
    return best


def _max_relaxation_rate(C: FrozenCoefficients) -> float:
    if not C.partition[2]:
        return 0.0
    sw = C.slices[2]
    inv = np.moveaxis(C.a0inv[sw, sw], (0, 1), (-2, -1))
    D = np.moveaxis(C.d0, (0, 1), (-2, -1))
    return float(np.max(np.abs(np.linalg.eigvals(inv @ D))))


def stable_dt(C: FrozenCoefficients, delta: float = 0.0, scheme: str = "ssprk3", c_stab: float = 0.2) -> float:
    """Largest time step allowed by the stability rule.

    Diffusion: ``c_stab h^2 / (d (b + delta))`` with ``b`` the largest
    diffusive rate; the semi-implicit scheme drops this limit.  Advection:
    ``0.5 h / c`` with ``c`` the largest characteristic speed.  Relaxation:
    ``1 / r`` with ``r`` the largest relaxation rate.
    """
    g = C.grid
    limits = [math.inf]
    if scheme != "imex":
        rate = _max_diffusive_rate(C, delta)
        if rate > 0:
            limits.append(c_stab * g.h**2 / (g.dim * rate))
    speed = _max_wave_speed(C)
    if speed > 0:
        limits.append(0.5 * g.h / speed)
    relax = _max_relaxation_rate(C)
    if relax > 0:
        limits.append(1.0 / relax)
    return min(limits)


class _ImplicitDiffusion:
    """Per-mode solve of ``(I - dt Pbar) X = Y`` for the averaged diffusion ``Pbar``."""

    def __init__(self, C: FrozenCoefficients, delta: float, dt: float):
        g = C.grid
        if g.dim != 1:
            raise LinsolveError("linsolve: the semi-implicit scheme is available in one dimension only")
        inv = C.a0inv
        N = C.N
        sv = C.slices[1]
        P = np.zeros((N, N))
        if C.partition[1]:
            P[sv, sv] = np.mean(np.einsum("ab...,bc...->ac...", inv[sv, sv], C.b[0, 0]), axis=-1)
        if delta:
            mask = Regularization.lambda_mask(C.partition).astype(bool)
            P[np.ix_(mask, mask)] += delta * np.mean(inv[np.ix_(mask, mask)], axis=-1)
        self.P = P
        k2 = np.abs(g.multiplier((2,)))  # k^2 on rfft modes
        self.k2 = k2
        self.ops = np.linalg.inv(np.eye(N)[None] + dt * k2[:, None, None] * P[None])
        self.dt = dt
        self.grid = g

    def apply_pbar(self, U: np.ndarray) -> np.ndarray:
        Uh = self.grid.fft(U)
        return self.grid.ifft(-self.k2[None] * np.einsum("ab,bk->ak", self.P, Uh))

    def solve(self, Y: np.ndarray) -> np.ndarray:
        Yh = self.grid.fft(Y)
        return self.grid.ifft(np.einsum("kab,bk->ak", self.ops, Yh))


def step(
    U: np.ndarray,
    coeffs,
    reg: Regularization | float,
    dt: float,
    scheme: str = "ssprk3",
    t: float = 0.0,
    _implicit: _ImplicitDiffusion | None = None,
    _rate0: np.ndarray | None = None,
) -> np.ndarray:
    """Advance ``U`` by one step of size ``dt`` from time ``t``.

    ``coeffs`` is a :class:`FrozenCoefficients` or a provider with ``at(t)``.
    """
    delta = reg.delta if isinstance(reg, Regularization) else float(reg)
    provider = coeffs if hasattr(coeffs, "at") else StaticCoefficients(coeffs)
    L = lambda X, s: rhs(X, provider.at(s), delta)
    k1 = _rate0 if _rate0 is not None else L(U, t)
    if scheme == "euler":
        return U + dt * k1
    if scheme == "ssprk3":
        U1 = U + dt * k1
        U2 = 0.75 * U + 0.25 * (U1 + dt * L(U1, t + dt))
        return U / 3.0 + (2.0 / 3.0) * (U2 + dt * L(U2, t + 0.5 * dt))
    if scheme == "imex":
        imp = _implicit or _ImplicitDiffusion(provider.at(t), delta, dt)
        return imp.solve(U + dt * (k1 - imp.apply_pbar(U)))
    raise LinsolveError(f"linsolve: unknown scheme {scheme!r}; expected one of {SCHEMES}")


def solve(
    U0: np.ndarray,
    coeffs,
    T: float,
    dt: float,
    delta: float = 0.0,
    scheme: str = "ssprk3",
    save_stride: int = 1,
    c_stab: float = 0.2,
    check_stability: bool = True,
    monitor: Callable[[float, np.ndarray], None] | None = None,
) -> Trajectory:
    """Integrate from ``U0`` over ``[0, T]``.

    The step is shrunk so that an integer number of steps lands on ``T``.
    Saved states carry ``U_t`` from the PDE operator.  ``monitor(t, U)`` is
    called at every step and may raise to abort.
    """
    provider = coeffs if hasattr(coeffs, "at") else StaticCoefficients(coeffs)
    reg = Regularization(delta)
    if scheme not in SCHEMES:
        raise LinsolveError(f"linsolve: unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if T < 0 or dt <= 0:
        raise LinsolveError(f"linsolve: need T >= 0 and dt > 0, got T = {T}, dt = {dt}")
    if save_stride < 1:
        raise LinsolveError("linsolve: save_stride must be >= 1")
    nsteps = max(int(math.ceil(T / dt - 1e-9)), 0)
    h = T / nsteps if nsteps else 0.0
    C0 = provider.at(0.0)
    if check_stability and nsteps:
        lim = stable_dt(C0, reg.delta, scheme, c_stab)
        if h > lim * (1 + 1e-12):
            raise StabilityError(
                f"linsolve: dt = {h:.6g} exceeds the stability limit {lim:.6g} for scheme {scheme}"
            )
    implicit = _ImplicitDiffusion(C0, reg.delta, h) if scheme == "imex" and nsteps else None
    U = np.array(U0, dtype=float, copy=True)
    if U.shape != (C0.N,) + C0.grid.shape:
        raise LinsolveError(f"linsolve: initial data has shape {U.shape}, expected {(C0.N,) + C0.grid.shape}")
    times, states, rates = [], [], []
    for nstep in range(nsteps + 1):
        t = nstep * h
        rate = rhs(U, provider.at(t), reg.delta)
        if monitor is not None:
            monitor(t, U)
        if nstep % save_stride == 0 or nstep == nsteps:
            times.append(t)
            states.append(U.copy())
            rates.append(rate)
        if nstep == nsteps:
            break
        U = step(U, provider, reg, h, scheme, t, implicit, rate)
        if not np.all(np.isfinite(U)):
            raise SolverNumericError(f"linsolve: solution became non-finite at t = {t + h:.6g}")
    times = np.array(times)
    if times.size:
        times[-1] = T if nsteps else 0.0
    return Trajectory(C0.grid, C0.partition, times, np.array(states), np.array(rates))


def pde_residual(traj: Trajectory, coeffs, m: int = 1, delta: float = 0.0) -> float:
    """Sup over saved intervals of the trapezoidal residual in ``||.||_{m-1}``.

    ``(U^{j+1} - U^j)/dt - (U_t^j + U_t^{j+1})/2`` is first order for forward
    Euler and second order for consistent higher-order schemes.
    """
    provider = coeffs if hasattr(coeffs, "at") else StaticCoefficients(coeffs)
    g = traj.grid
    rates = traj.rates
    if rates is None:
        rates = np.array([rhs(U, provider.at(t), delta) for t, U in zip(traj.times, traj.states)])
    worst = 0.0
    for j in range(len(traj) - 1):
        dt = traj.times[j + 1] - traj.times[j]
        r = (traj.states[j + 1] - traj.states[j]) / dt - 0.5 * (rates[j] + rates[j + 1])
        worst = max(worst, math.sqrt(g.sobolev_norm_sq(r, max(m - 1, 0))))
    return worst


# -- energy diagnostics -----------------------------------------------------


def _cumtrapz(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y, dtype=float)
    if y.size > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def _matrix_hat_norm(M: np.ndarray, grid: PeriodicGrid, s: int) -> float:
    """``sup_x |M(x)|_F + ||grad M||_{s-1}`` for a matrix field ``(a, b, *S)``."""
    if M.size == 0:
        return 0.0
    d = grid.dim
    flat = M.reshape((-1,) + grid.shape)
    sup = float(np.sqrt(np.max(np.sum(flat**2, axis=0))))
    if np.ptp(flat, axis=tuple(range(1, d + 1))).max() == 0.0:
        return sup
    grad = grid.gradient(flat)
    return sup + math.sqrt(grid.sobolev_norm_sq(grad, s - 1))


def _coefficient_norms(C: FrozenCoefficients, s: int) -> float:
    """``mu0 = sum |A^i|^2 + sum |B^ij|^2 + sum |A^i| + |D|^2 + |D| + 1`` in hat norms."""
    g = C.grid
    A = [_matrix_hat_norm(C.a[i], g, s) for i in range(g.dim)]
    B = [_matrix_hat_norm(C.b[i, j], g, s) for i in range(g.dim) for j in range(g.dim)]
    D = _matrix_hat_norm(C.d0, g, s)
    return sum(a * a for a in A) + sum(b * b for b in B) + sum(A) + D * D + D + 1.0


@dataclass
class EnergyTrace:
    """Energy functional, dissipation integrals and the fitted Gronwall bound.

    ``lhs`` is ``||U(t)||_m^2 + int ||U_t||_{m-1}^2 + int (||u||_m^2 +
    ||v||_{m+1}^2 + ||w||_m^2)``; ``bound`` is ``K0^2(t) C1 exp(C1 int (mu0 +
    mu1))``.
    """

    times: np.ndarray
    E_m2: np.ndarray
    norm_m2: np.ndarray
    diss_v: np.ndarray
    diss_ut: np.ndarray
    diss_all: np.ndarray
    lhs: np.ndarray
    K0_sq: np.ndarray
    F_m2: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray
    mu_integral: np.ndarray
    C1: float
    bound: np.ndarray
    m: int
    s: int

    @property
    def holds(self) -> bool:
        return bool(np.all(self.lhs <= self.bound * (1 + 1e-12)))

    def rows(self):
        for j in range(self.times.size):
            yield (
                self.times[j],
                self.E_m2[j],
                self.diss_v[j],
                self.diss_ut[j],
                self.mu0[j],
                self.mu1[j],
                self.bound[j],
            )

    columns = ("t", "E_m2", "diss_v", "diss_ut", "mu0", "mu1", "bound")


def fit_gronwall_constant(lhs, K0_sq, integral, c_lo: float = 1.0, c_hi: float = 1e6, iters: int = 200) -> float:
    """Least ``C`` in ``[c_lo, c_hi]`` with ``lhs <= K0^2 C exp(C integral)`` everywhere.

    Returns ``inf`` when even ``c_hi`` fails.
    """
    lhs = np.asarray(lhs, dtype=float)
    K = np.asarray(K0_sq, dtype=float)
    I = np.asarray(integral, dtype=float)
    active = lhs > 0
    if not np.any(active):
        return c_lo
    if np.any(active & (K <= 0)):
        return math.inf

    def ok(C):
        with np.errstate(divide="ignore"):
            return bool(np.all(np.log(lhs[active]) <= np.log(K[active]) + math.log(C) + C * I[active]))

    if ok(c_lo):
        return c_lo
    if not ok(c_hi):
        return math.inf
    lo, hi = c_lo, c_hi
    for _ in range(iters):
        mid = math.sqrt(lo * hi) if hi / lo > 4 else 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * hi:
            break
    return hi


def energy_trace(
    traj: Trajectory,
    coeffs,
    m: int,
    reference: np.ndarray | None = None,
    s: int | None = None,
    delta: float = 0.0,
    c_max: float = 1e6,
) -> EnergyTrace:
    """Discrete energy estimate along a solved trajectory.

    Norms are of ``U - reference`` when a constant ``reference`` is given.
    ``U_t`` comes from the PDE operator.  Coefficient norms use hat order
    ``s`` (default ``max(m, [d/2] + 2)``).  Raises :class:`EnergyError` when
    the fitted constant exceeds ``c_max``.
    """
    if len(traj) == 0:
        raise LinsolveError("linsolve: empty trajectory")
    if m < 1:
        raise LinsolveError(f"linsolve: energy order m must be >= 1, got {m}")
    provider = coeffs if hasattr(coeffs, "at") else StaticCoefficients(coeffs)
    g = traj.grid
    d = g.dim
    if s is None:
        s = max(m, d // 2 + 2)
    su, sv, sw = (slice(0, traj.partition[0]),
                  slice(traj.partition[0], traj.partition[0] + traj.partition[1]),
                  slice(traj.partition[0] + traj.partition[1], sum(traj.partition)))
    P = traj.states if reference is None else traj.states - reference
    rates = traj.rates
    nt = len(traj)
    E = np.zeros(nt)
    norm_m = np.zeros(nt)
    ut = np.zeros(nt)
    vdiss = np.zeros(nt)
    alld = np.zeros(nt)
    Fm = np.zeros(nt)
    mu0 = np.zeros(nt)
    mu1 = np.zeros(nt)
    coeff_nodes = [provider.at(t) for t in traj.times]
    alphas = multi_indices(d, m)
    for j in range(nt):
        C = coeff_nodes[j]
        rate = rates[j] if rates is not None else rhs(traj.states[j], C, delta)
        Ph = g.fft(P[j])
        e = 0.0
        for alpha in alphas:
            dP = g.ifft(Ph * g.multiplier(alpha))
            e += g.cell_volume * float(np.sum(dP * _matvec(C.a0, dP)))
        E[j] = e
        norm_m[j] = g.sobolev_norm_sq_hat(Ph, m)
        ut[j] = g.sobolev_norm_sq(rate, m - 1)
        vpart = g.sobolev_norm_sq_hat(Ph[sv], m + 1) if traj.partition[1] else 0.0
        vdiss[j] = vpart
        alld[j] = g.sobolev_norm_sq_hat(Ph[su], m) + vpart + g.sobolev_norm_sq_hat(Ph[sw], m)
        f = C.f
        Fm[j] = g.sobolev_norm_sq(f[su], m) + g.sobolev_norm_sq(f[sv], m - 1) + g.sobolev_norm_sq(f[sw], m)
        mu0[j] = _coefficient_norms(C, s)
    if getattr(provider, "time_dependent", False) and nt > 1:
        a0s = np.array([C.a0 for C in coeff_nodes])
        bs = np.array([C.b for C in coeff_nodes])
        da0 = np.gradient(a0s, traj.times, axis=0)
        db = np.gradient(bs, traj.times, axis=0)
        for j in range(nt):
            val = math.sqrt(g.sobolev_norm_sq(da0[j].reshape((-1,) + g.shape), s - 1))
            for i in range(d):
                for l in range(d):
                    val += math.sqrt(g.sobolev_norm_sq(db[j, i, l].reshape((-1,) + g.shape), s - 1))
            mu1[j] = val
    t = traj.times
    diss_ut = _cumtrapz(ut, t)
    diss_v = _cumtrapz(vdiss, t)
    diss_all = _cumtrapz(alld, t)
    lhs = norm_m + diss_ut + diss_all
    K0 = norm_m[0] + _cumtrapz(Fm, t)
    mu_int = _cumtrapz(mu0 + mu1, t)
    C1 = fit_gronwall_constant(lhs, K0, mu_int, 1.0, c_max)
    if not math.isfinite(C1) or C1 > c_max:
        raise EnergyError(f"linsolve: no Gronwall constant C1 <= {c_max:g} validates the energy estimate")
    bound = K0 * C1 * np.exp(C1 * mu_int)
    return EnergyTrace(t, E, norm_m, diss_v, diss_ut, diss_all, lhs, K0, Fm, mu0, mu1, mu_int, C1, bound, m, s)


# -- coupling demonstration ---------------------------------------------------


@dataclass(frozen=True)
class CouplingRow:
    T0: float
    gain_uncoupled: float
    gain_coupled: float
    inputs: int


def _demo_inputs(grid: PeriodicGrid, rng: np.random.Generator, count: int) -> list[np.ndarray]:
    """Seeded ``(w, z)`` input pairs: single modes across scales plus random mixtures."""
    x = grid.coords[0]
    out = []
    modes = [1, 2, 3, 4, 6, 8, 12, 16]
    for k in modes:
        for _ in range(2):
            pw, pz = rng.uniform(0, 2 * np.pi, 2)
            aw, az = rng.uniform(0.0, 1.0, 2)
            out.append(np.stack([aw * np.cos(k * x + pw), az * np.cos(k * x + pz)]))
    while len(out) < count:
        wz = np.zeros((2,) + grid.shape)
        for c in range(2):
            for k in rng.choice(np.arange(1, 17), size=3, replace=False):
                wz[c] += rng.normal() * np.cos(k * x + rng.uniform(0, 2 * np.pi))
        out.append(wz)
    return out


def _demo_coefficients(grid: PeriodicGrid, wz: np.ndarray, coupled: bool) -> FrozenCoefficients:
    w, z = wz
    wx, zx = grid.gradient(wz)[0]
    f = np.stack([zx + w, wx + zx + z])
    a = np.zeros((1, 2, 2) + grid.shape)
    a[0, 0, 0] = 1.0
    if coupled:
        a[0, 0, 1] = 1.0
    a0 = np.eye(2).reshape((2, 2, 1)) * np.ones(grid.shape)
    b = np.ones((1, 1, 1, 1) + grid.shape)
    d0 = np.zeros((0, 0) + grid.shape)
    return FrozenCoefficients(grid, (1, 1, 0), a0, a, b, d0, f)


def demo_coupling_1d(
    T0_list: Sequence[float],
    n: int = 128,
    s: int = 2,
    dt: float | None = None,
    seed: int = 0,
    count: int = 24,
    scheme: str = "ssprk3",
) -> list[CouplingRow]:
    """Gains of the solve map ``(w, z) -> (u, v)`` for both coupling variants.

    Uncoupled: ``u_t + u_x = f1``; coupled: ``u_t + u_x + v_x = f1``; both
    with ``v_t - v_xx = f2``, zero initial data, ``f1 = z_x + w`` and
    ``f2 = w_x + z_x + z``.  Inputs are constant in time.  The gain is
    ``(sup ||(u,v)||_{s-1}^2 + int ||v||_s^2) / (sup ||(w,z)||_{s-1}^2 +
    int ||z||_s^2)``, maximized over a seeded input family.
    """
    T0_list = [float(t) for t in T0_list]
    if not T0_list or any(t <= 0 for t in T0_list) or any(b <= a for a, b in zip(T0_list, T0_list[1:])):
        raise LinsolveError("linsolve: T0_list must be positive and increasing")
    grid = PeriodicGrid(1, n)
    rng = np.random.default_rng(seed)
    inputs = _demo_inputs(grid, rng, count)
    if dt is None:
        dt = 0.5 * stable_dt(_demo_coefficients(grid, inputs[0], True), 0.0, scheme)
    rows = []
    for T0 in T0_list:
        gains = {False: 0.0, True: 0.0}
        used = 0
        for wz in inputs:
            in_norm = grid.sobolev_norm_sq(wz, s - 1) + T0 * grid.sobolev_norm_sq(wz[1], s)
            if in_norm == 0.0:
                continue
            used += 1
            for coupled in (False, True):
                C = _demo_coefficients(grid, wz, coupled)
                traj = solve(np.zeros((2,) + grid.shape), C, T0, dt, scheme=scheme)
                sup = max(grid.sobolev_norm_sq(U, s - 1) for U in traj.states)
                vint = _cumtrapz(np.array([grid.sobolev_norm_sq(U[1], s) for U in traj.states]), traj.times)[-1]
                gains[coupled] = max(gains[coupled], (sup + vint) / in_norm)
        rows.append(CouplingRow(T0, gains[False], gains[True], used))
    return rows
