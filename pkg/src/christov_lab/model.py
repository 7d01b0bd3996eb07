"""Viscous Cattaneo-Christov fluid: closure, matrix symbols and diagnostics.

The unknown is ``U = (rho, v, theta, q)`` with ``v, q`` in ``R^d``, so
``N = 2d + 2``.  The quasilinear form is

    A0(U) U_t + A^i(U) d_i U + D(U) U - B^{ij}(U) d_i d_j U = F(U, D_x U),

where ``A(xi; U) = xi_i A^i(U)`` and ``B(xi; U) = xi_i xi_j B^{ij}(U)``.
Heat flux obeys the Christov relaxation law

    tau (q_t + v.grad q - q.grad v + (div v) q) + q = -kappa grad theta.

``d = 3`` is the physical case; ``d = 1`` is the planar reduction.  All
symbol builders broadcast over trailing axes, so the same code evaluates a
single state or a whole grid of states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ModelError",
    "ThermoError",
    "DomainError",
    "DirectionError",
    "NumericError",
    "Thermodynamics",
    "PointState",
    "SymbolSet",
    "HypothesisItem",
    "HypothesisReport",
    "EigenCluster",
    "SpectrumReport",
    "NonlinearTerms",
    "layout",
    "closure",
    "a0_diagonal",
    "symmetrizer_diagonal",
    "relaxation_diagonal",
    "flux_symbol",
    "q_block",
    "viscous_block",
    "nonlinear_fields",
    "eval_symbols",
    "symmetrize",
    "check_hypotheses",
    "eigen_analysis",
    "nonlinear_terms",
]

UNIT_TOL = 1e-12


class ModelError(ValueError):
    """Base class for model errors."""


class ThermoError(ModelError):
    """Closure constants violate a structural assumption."""


class DomainError(ModelError):
    """State outside ``{rho > 0, theta > 0}``."""


class DirectionError(ModelError):
    """Direction vector is zero or not of unit length."""


class NumericError(ModelError, ArithmeticError):
    """Eigen-solver failure."""


@dataclass(frozen=True)
class Thermodynamics:
    """Ideal-gas closure ``p = R rho theta``, ``e = c_v theta``.

    Parameters
    ----------
    R, c_v : float
        Gas constant and specific heat, both positive.
    mu, lam : float
        Shear and second viscosity at ``theta = 1``.
    kappa, tau : float
        Heat conductivity and relaxation time, both positive.
    viscosity_exponent : float
        Viscosities scale as ``theta**viscosity_exponent``; 0 gives constant
        coefficients, 0.5 the square-root law.
    """

    R: float = 1.0
    c_v: float = 1.0
    mu: float = 1.0
    lam: float = 0.0
    kappa: float = 1.0
    tau: float = 1.0
    viscosity_exponent: float = 0.0

    def __post_init__(self):
        checks = [
            (self.R > 0, f"R > 0 (p, p_rho, p_theta > 0), got R = {self.R}"),
            (self.c_v > 0, f"c_v > 0 (e_theta > 0), got c_v = {self.c_v}"),
            (self.kappa > 0, f"kappa > 0, got kappa = {self.kappa}"),
            (self.tau > 0, f"tau > 0, got tau = {self.tau}"),
            (self.mu >= 0, f"mu >= 0, got mu = {self.mu}"),
        ]
        if self.viscous:
            checks += [
                (self.mu > 0, f"mu > 0 in viscous mode, got mu = {self.mu}"),
                (
                    2.0 * self.mu / 3.0 + self.lam > 0,
                    f"(2/3) mu + lambda > 0, got {2.0 * self.mu / 3.0 + self.lam}",
                ),
            ]
        for ok, msg in checks:
            if not (ok and np.isfinite([self.R, self.c_v, self.kappa, self.tau, self.mu, self.lam]).all()):
                raise ThermoError(f"model: thermodynamic assumption violated: {msg}")

    @property
    def viscous(self) -> bool:
        return self.mu != 0 or self.lam != 0


def layout(d: int) -> dict:
    """Index ranges of ``rho, v, theta, q`` in a state vector of length ``2d + 2``."""
    return {
        "rho": 0,
        "v": slice(1, 1 + d),
        "theta": 1 + d,
        "q": slice(2 + d, 2 + 2 * d),
        "N": 2 * d + 2,
        "partition": (1, d, d + 1),
    }


def closure(rho, theta, thermo: Thermodynamics) -> dict:
    """Pressure, energy and transport coefficients with their derivatives."""
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    e = thermo.viscosity_exponent
    scale = theta**e if e else np.ones_like(theta)
    dscale = e * theta ** (e - 1) if e else np.zeros_like(theta)
    return {
        "p": thermo.R * rho * theta,
        "p_rho": thermo.R * theta,
        "p_theta": thermo.R * rho,
        "e_theta": thermo.c_v * np.ones_like(theta),
        "mu": thermo.mu * scale,
        "lam": thermo.lam * scale,
        "mu_theta": thermo.mu * dscale,
        "lam_theta": thermo.lam * dscale,
    }


def _check_domain(rho, theta):
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    bad = ~((rho > 0) & (theta > 0) & np.isfinite(rho) & np.isfinite(theta))
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0]) if bad.ndim else ()
        raise DomainError(
            f"model: state outside rho > 0, theta > 0 at index {idx}: "
            f"rho = {np.asarray(rho)[idx] if rho.ndim else rho}, "
            f"theta = {np.asarray(theta)[idx] if theta.ndim else theta}"
        )


def a0_diagonal(rho, theta, thermo: Thermodynamics, d: int) -> np.ndarray:
    """Diagonal of the unsymmetrized ``A0``: ``(1, rho I_d, rho e_theta, tau I_d)``."""
    rho = np.asarray(rho, dtype=float)
    c = closure(rho, theta, thermo)
    ones = np.ones_like(rho)
    return np.stack([ones] + [rho] * d + [rho * c["e_theta"]] + [thermo.tau * ones] * d)


def symmetrizer_diagonal(rho, theta, thermo: Thermodynamics, d: int) -> np.ndarray:
    """Diagonal of ``S(U) = diag(p_rho / rho, I_d, 1/theta, I_d / (kappa theta))``."""
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    c = closure(rho, theta, thermo)
    ones = np.ones_like(rho)
    return np.stack(
        [c["p_rho"] / rho] + [ones] * d + [1.0 / theta] + [1.0 / (thermo.kappa * theta)] * d
    )


def relaxation_diagonal(shape, d: int) -> np.ndarray:
    """Diagonal of the unsymmetrized ``D``: zero except ones on ``q``."""
    out = np.zeros((2 * d + 2,) + tuple(shape))
    out[2 + d :] = 1.0
    return out


def q_block(q, xi) -> np.ndarray:
    """``Q(q; xi)_{ik} = q_i xi_k - (xi . q) delta_{ik}``, shape ``(d, d, ...)``."""
    q = np.asarray(q, dtype=float)
    xi = np.asarray(xi, dtype=float)
    d = q.shape[0]
    xi_b = xi.reshape((d,) + (1,) * (q.ndim - 1)) if xi.ndim == 1 else xi
    xq = np.sum(xi_b * q, axis=0)
    out = q[:, None] * xi_b[None, :] - xq * np.eye(d).reshape((d, d) + (1,) * (q.ndim - 1))
    return out


def flux_symbol(rho, v, theta, q, xi, thermo: Thermodynamics) -> np.ndarray:
    """Unsymmetrized first-order symbol ``A(xi; U)``, shape ``(N, N, ...)``."""
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    q = np.asarray(q, dtype=float)
    xi = np.asarray(xi, dtype=float)
    d = v.shape[0]
    ext = rho.shape
    xi_b = xi.reshape((d,) + (1,) * len(ext)) * np.ones((1,) + ext)
    c = closure(rho, theta, thermo)
    L = layout(d)
    N = L["N"]
    iv, it, iq = L["v"], L["theta"], L["q"]
    xv = np.sum(xi_b * v, axis=0)
    eye = np.eye(d).reshape((d, d) + (1,) * len(ext))
    A = np.zeros((N, N) + ext)
    A[0, 0] = xv
    A[0, iv] = rho * xi_b
    A[iv, 0] = c["p_rho"] * xi_b
    A[iv, iv] = rho * xv * eye
    A[iv, it] = c["p_theta"] * xi_b
    A[it, iv] = theta * c["p_theta"] * xi_b
    A[it, it] = rho * c["e_theta"] * xv
    A[it, iq] = xi_b
    A[iq, iv] = thermo.tau * q_block(q, xi_b)
    A[iq, it] = thermo.kappa * xi_b
    A[iq, iq] = thermo.tau * xv * eye
    return A


def viscous_block(theta, xi, eta, thermo: Thermodynamics, d: int) -> np.ndarray:
    """Velocity block of the bilinear second-order symbol, shape ``(d, d, ...)``.

    ``B(xi, eta)_{ab} = mu (xi . eta) delta_ab + (lam + mu)(xi_a eta_b + eta_a xi_b) / 2``,
    so ``B(xi, xi) = mu |xi|^2 I + (lam + mu) xi xi^T`` and ``B^{ij} = B(e_i, e_j)``.
    """
    theta = np.asarray(theta, dtype=float)
    c = closure(np.ones_like(theta), theta, thermo)
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    ext = theta.shape
    sh = (d, d) + (1,) * len(ext)
    sym = (np.outer(xi, eta) + np.outer(eta, xi)) / 2.0
    return c["mu"] * float(xi @ eta) * np.eye(d).reshape(sh) + (c["lam"] + c["mu"]) * sym.reshape(sh)


def _as_unit(xi, d: int) -> np.ndarray:
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.shape != (d,):
        raise DirectionError(f"model: direction must have {d} components, got {xi.shape[0]}")
    nrm = float(np.linalg.norm(xi))
    if nrm == 0.0 or not np.isfinite(nrm):
        raise DirectionError("model: direction xi is zero or non-finite")
    if abs(nrm - 1.0) > UNIT_TOL:
        raise DirectionError(f"model: direction must be a unit vector, |xi| = {nrm!r}")
    return xi / nrm


@dataclass(frozen=True)
class PointState:
    """A single state ``(rho, v, theta, q)``; ``len(v) == len(q)`` is the dimension."""

    rho: float
    v: tuple
    theta: float
    q: tuple

    def __init__(self, rho, v, theta, q):
        v = tuple(float(x) for x in np.atleast_1d(v))
        q = tuple(float(x) for x in np.atleast_1d(q))
        if len(v) != len(q) or len(v) not in (1, 2, 3):
            raise ModelError(f"model: v and q must have equal length 1..3, got {len(v)}, {len(q)}")
        _check_domain(rho, theta)
        object.__setattr__(self, "rho", float(rho))
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "theta", float(theta))
        object.__setattr__(self, "q", q)

    @property
    def dim(self) -> int:
        return len(self.v)

    def as_vector(self) -> np.ndarray:
        return np.array([self.rho, *self.v, self.theta, *self.q])

    @classmethod
    def from_vector(cls, U: Sequence[float]) -> "PointState":
        U = np.asarray(U, dtype=float)
        d = (U.size - 2) // 2
        L = layout(d)
        return cls(U[0], U[L["v"]], U[L["theta"]], U[L["q"]])


@dataclass(frozen=True)
class SymbolSet:
    """Matrices of the system at one state and direction.

    ``symmetrized`` records whether ``S`` has already been applied; the
    partition ``(n, k, p)`` splits the state into ``u = rho``, ``v``,
    ``w = (theta, q)``.
    """

    a0: np.ndarray
    a_xi: np.ndarray
    b_xi: np.ndarray
    d_mat: np.ndarray
    s_mat: np.ndarray
    xi: np.ndarray
    state: PointState
    thermo: Thermodynamics
    symmetrized: bool = False
    partition: tuple = ()

    def block(self, name: str, i: int, j: int | None = None) -> np.ndarray:
        """Block ``(i, j)`` (1-based) of matrix ``name`` under the partition."""
        M = getattr(self, name)
        n, k, p = self.partition
        edges = [0, n, n + k, n + k + p]
        j = i if j is None else j
        return M[edges[i - 1] : edges[i], edges[j - 1] : edges[j]]


def eval_symbols(state: PointState, xi, thermo: Thermodynamics) -> SymbolSet:
    """Assemble ``A0``, ``A(xi)``, ``B(xi)``, ``D`` and ``S`` at ``state``."""
    d = state.dim
    xi = _as_unit(xi, d)
    L = layout(d)
    rho, theta = state.rho, state.theta
    v, q = np.array(state.v), np.array(state.q)
    a0 = np.diag(a0_diagonal(rho, theta, thermo, d))
    a_xi = flux_symbol(rho, v, theta, q, xi, thermo)
    b_xi = np.zeros((L["N"], L["N"]))
    b_xi[L["v"], L["v"]] = viscous_block(theta, xi, xi, thermo, d)
    d_mat = np.diag(relaxation_diagonal((), d))
    s_mat = np.diag(symmetrizer_diagonal(rho, theta, thermo, d))
    return SymbolSet(a0, a_xi, b_xi, d_mat, s_mat, xi, state, thermo, False, L["partition"])


def symmetrize(sym: SymbolSet) -> SymbolSet:
    """Left-multiply every matrix by the partial symmetrizer ``S``."""
    if sym.symmetrized:
        return sym
    S = sym.s_mat
    return SymbolSet(
        S @ sym.a0,
        S @ sym.a_xi,
        S @ sym.b_xi,
        S @ sym.d_mat,
        S,
        sym.xi,
        sym.state,
        sym.thermo,
        True,
        sym.partition,
    )


@dataclass(frozen=True)
class HypothesisItem:
    name: str
    value: float
    tolerance: float
    passed: bool
    expected: float | None = None


@dataclass(frozen=True)
class HypothesisReport:
    items: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(it.passed for it in self.items)

    def __getitem__(self, name: str) -> HypothesisItem:
        for it in self.items:
            if it.name == name:
                return it
        raise KeyError(name)


def _sym_defect(M: np.ndarray) -> float:
    return float(np.linalg.norm(M - M.T)) if M.size else 0.0


def check_hypotheses(sym: SymbolSet, rel_tol: float = 1e-10) -> HypothesisReport:
    """Structural checks on a symmetrized symbol set.

    Symmetry of ``A0`` blocks, ``A_11``, ``A_33`` and ``B0``; positivity of
    the ``A0`` blocks; the smallest eigenvalue of ``B0`` against
    ``min(2 mu + lam, mu)``; presence of the coupling blocks.
    """
    if not sym.symmetrized:
        sym = symmetrize(sym)
    items = []
    n, k, p = sym.partition
    for name, M in [
        ("A0_1 symmetry", sym.block("a0", 1)),
        ("A0_2 symmetry", sym.block("a0", 2)),
        ("A0_3 symmetry", sym.block("a0", 3)),
        ("A_11 symmetry", sym.block("a_xi", 1)),
        ("A_33 symmetry", sym.block("a_xi", 3)),
        ("B0 symmetry", sym.block("b_xi", 2)),
    ]:
        scale = float(np.linalg.norm(M)) if M.size else 0.0
        tol = rel_tol * max(scale, np.finfo(float).tiny)
        val = _sym_defect(M)
        items.append(HypothesisItem(name, val, tol, val <= tol))
    for i in (1, 2, 3):
        M = sym.block("a0", i)
        lam_min = float(np.min(np.linalg.eigvalsh((M + M.T) / 2))) if M.size else np.inf
        items.append(HypothesisItem(f"A0_{i} positivity", lam_min, 0.0, lam_min > 0))
    B0 = sym.block("b_xi", 2)
    c = closure(sym.state.rho, sym.state.theta, sym.thermo)
    mu, lam = float(c["mu"]), float(c["lam"])
    expected = min(2 * mu + lam, mu) if k > 1 else 2 * mu + lam
    got = float(np.min(np.linalg.eigvalsh((B0 + B0.T) / 2)))
    tol = rel_tol * max(float(np.linalg.norm(B0, 2)), np.finfo(float).tiny)
    items.append(HypothesisItem("B0 min eigenvalue", got, tol, abs(got - expected) <= tol, expected))
    for i, j in [(1, 2), (2, 1), (2, 3), (3, 2)]:
        M = sym.block("a_xi", i, j)
        items.append(HypothesisItem(f"A_{i}{j} coupling present", float(np.linalg.norm(M)), 0.0, True))
    return HypothesisReport(items)


@dataclass(frozen=True)
class EigenCluster:
    value: complex
    algebraic: int
    geometric: int
    spread: float

    @property
    def defective(self) -> bool:
        return self.geometric < self.algebraic


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenstructure of ``A0^{-1} A(xi; U)``.

    ``max_imag`` uses cluster means, which are well conditioned even when a
    defective eigenvalue splits under round-off; ``max_imag_raw`` is the
    largest imaginary part returned by the eigen-solver.
    """

    eigenvalues: np.ndarray
    clusters: list
    max_imag: float
    max_imag_raw: float
    diagonalizable: bool
    matrix_norm: float
    state: PointState
    xi: np.ndarray

    @property
    def verdict(self) -> str:
        return "diagonalizable" if self.diagonalizable else "non-diagonalizable"

    def text(self) -> str:
        lines = [
            f"state: rho={self.state.rho!r} v={list(self.state.v)} theta={self.state.theta!r} q={list(self.state.q)}",
            f"direction: {list(map(float, self.xi))}",
            f"matrix 2-norm: {self.matrix_norm:.17g}",
            f"max |Im| (cluster means): {self.max_imag:.3e}",
            f"max |Im| (raw eigenvalues): {self.max_imag_raw:.3e}",
            "clusters (value, algebraic, geometric):",
        ]
        for c in self.clusters:
            tag = "  defective" if c.defective else ""
            lines.append(f"  {c.value.real:+.12f}{c.value.imag:+.3e}j  {c.algebraic}  {c.geometric}{tag}")
        lines.append(f"verdict: {self.verdict}")
        return "\n".join(lines)


def _cluster(values: np.ndarray, tol: float) -> list[list[int]]:
    """Single-linkage clusters of eigenvalues closer than ``tol``."""
    n = values.size
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) <= tol:
                parent[find(i)] = find(j)
    groups: dict = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: (values[g].real.mean(), values[g].imag.mean()))


def eigen_analysis(
    state: PointState,
    xi,
    thermo: Thermodynamics,
    cluster_tol: float = 1e-6,
    rank_tol: float = 1e-8,
) -> SpectrumReport:
    """Eigenvalues, multiplicities and a diagonalizability verdict.

    Eigenvalues of ``M = A0^{-1} A(xi; U)`` closer than ``cluster_tol * ||M||``
    form one cluster; its algebraic multiplicity is the cluster size and its
    geometric multiplicity is the number of singular values of
    ``M - mean I`` below ``rank_tol * ||M||``.
    """
    sym = eval_symbols(state, xi, thermo)
    M = np.linalg.solve(sym.a0, sym.a_xi)
    try:
        lam = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"model: eigen-solver failed at state {state}, xi {sym.xi}: {exc}") from exc
    if not np.all(np.isfinite(lam)):
        raise NumericError(f"model: non-finite eigenvalues at state {state}, xi {sym.xi}")
    norm = float(np.linalg.norm(M, 2))
    scale = max(norm, np.finfo(float).tiny)
    clusters = []
    for g in _cluster(lam, cluster_tol * scale):
        mean = complex(np.mean(lam[g]))
        sv = np.linalg.svd(M - mean * np.eye(M.shape[0]), compute_uv=False)
        geom = int(np.sum(sv < rank_tol * scale))
        spread = float(np.max(np.abs(lam[g] - mean)))
        clusters.append(EigenCluster(mean, len(g), geom, spread))
    diag = all(c.geometric == c.algebraic for c in clusters)
    return SpectrumReport(
        eigenvalues=lam,
        clusters=clusters,
        max_imag=max(abs(c.value.imag) for c in clusters),
        max_imag_raw=float(np.max(np.abs(lam.imag))),
        diagonalizable=diag,
        matrix_norm=norm,
        state=state,
        xi=sym.xi,
    )


@dataclass(frozen=True)
class NonlinearTerms:
    """Unsymmetrized right-hand side ``F`` and its symmetrized split."""

    F: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray

    @property
    def symmetrized(self) -> np.ndarray:
        return np.concatenate([self.f1, self.f2, self.f3])


def nonlinear_fields(U: np.ndarray, grad: np.ndarray, thermo: Thermodynamics) -> np.ndarray:
    """Unsymmetrized ``F(U, D_x U)``.

    ``U`` has shape ``(N, ...)`` and ``grad[c, j] = d_j U_c`` has shape
    ``(N, d, ...)``.  Momentum rows collect the viscosity-gradient terms,
    the energy row the viscous dissipation; ``rho`` and ``q`` rows vanish.
    """
    U = np.asarray(U, dtype=float)
    grad = np.asarray(grad, dtype=float)
    N = U.shape[0]
    d = (N - 2) // 2
    L = layout(d)
    theta = U[L["theta"]]
    c = closure(U[0], theta, thermo)
    Dv = grad[L["v"]]  # Dv[a, j] = d_j v_a
    dtheta = grad[L["theta"]]
    grad_mu = c["mu_theta"] * dtheta
    grad_lam = c["lam_theta"] * dtheta
    div = np.einsum("jj...->...", Dv)
    F = np.zeros_like(U)
    mom = div * grad_lam + np.einsum("aj...,j...->a...", Dv, grad_mu) + np.einsum("ja...,j...->a...", Dv, grad_mu)
    F[L["v"]] = mom
    strain = Dv + np.swapaxes(Dv, 0, 1)
    F[L["theta"]] = c["lam"] * div**2 + 0.5 * c["mu"] * np.sum(strain**2, axis=(0, 1))
    return F


def nonlinear_terms(state: PointState, grad, thermo: Thermodynamics) -> NonlinearTerms:
    """``F`` at one state with gradient block ``grad`` of shape ``(N, d)``."""
    d = state.dim
    L = layout(d)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != (L["N"], d):
        raise ModelError(f"model: gradient block must have shape {(L['N'], d)}, got {grad.shape}")
    U = state.as_vector()
    F = nonlinear_fields(U, grad, thermo)
    S = symmetrizer_diagonal(state.rho, state.theta, thermo, d)
    f = S * F
    n, k, p = L["partition"]
    return NonlinearTerms(F, f[:n], f[n : n + k], f[n + k :])
