"""Discrete calculus on the periodic box ``[0, 2pi)^d``.

Derivatives are exact derivatives of the trigonometric interpolant
(computed with real FFTs), norms are trapezoidal sums, which are exact for
band-limited grid functions.  Fields carry a leading component axis followed
by ``d`` grid axes.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "GridError",
    "ResolutionError",
    "PeriodicGrid",
    "Field",
    "SobolevNorm",
    "multi_indices",
    "spectral_derivative",
    "sobolev_norm",
    "hat_norm",
    "commutator",
    "trig_corpus",
    "InequalityReport",
    "inequality_harness",
    "snapshot_bytes",
    "write_snapshot",
    "read_snapshot",
]

_SNAPSHOT_MAGIC = b"CLABFLD1"


class GridError(ValueError):
    """Invalid grid, mismatched grids or non-finite data."""


class ResolutionError(GridError):
    """Derivative order too high for the grid."""


def multi_indices(dim: int, max_order: int, exact: bool = False) -> list[tuple[int, ...]]:
    """All multi-indices of length ``dim`` with ``|alpha| <= max_order``.

    With ``exact=True`` only ``|alpha| == max_order`` is returned.
    """
    out = []
    for alpha in itertools.product(range(max_order + 1), repeat=dim):
        total = sum(alpha)
        if total == max_order or (not exact and total < max_order):
            out.append(alpha)
    out.sort(key=lambda a: (sum(a), tuple(-x for x in a)))
    return out


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid with ``n`` points per axis on ``[0, 2pi)^dim``."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise GridError(f"grid: dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 8 or self.n % 2:
            raise GridError(f"grid: n must be an even integer >= 8, got {self.n}")

    @property
    def h(self) -> float:
        return 2.0 * np.pi / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def max_order(self) -> int:
        return self.n // 2 - 1

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays, each of shape ``self.shape``."""
        x = np.arange(self.n) * self.h
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    @cached_property
    def _wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Per-axis integer wavenumbers, broadcastable to the rfft shape."""
        n = self.n
        out = []
        for ax in range(self.dim):
            if ax == self.dim - 1:
                k = np.fft.rfftfreq(n, 1.0 / n)
            else:
                k = np.fft.fftfreq(n, 1.0 / n)
            shape = [1] * self.dim
            shape[ax] = k.size
            out.append(np.round(k).reshape(shape))
        return tuple(out)

    @cached_property
    def _rfft_multiplicity(self) -> np.ndarray:
        """Weights turning sums over rfft modes into sums over all modes."""
        k = self._wavenumbers[-1]
        c = np.full(k.shape, 2.0)
        c[..., 0] = 1.0
        c[..., -1] = 1.0  # Nyquist column is its own conjugate for even n
        return c

    def _axis_factor(self, ax: int, order: int) -> np.ndarray:
        k = self._wavenumbers[ax]
        fac = (1j * k) ** order
        if order % 2 == 1:
            fac = np.where(np.abs(k) == self.n // 2, 0.0, fac)
        return fac

    def multiplier(self, alpha: Sequence[int]) -> np.ndarray:
        """Fourier multiplier of ``d^alpha`` on the rfft grid."""
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.dim:
            raise GridError(f"grid: multi-index {alpha} has wrong length for dim {self.dim}")
        if any(a < 0 for a in alpha):
            raise GridError(f"grid: multi-index {alpha} has negative entries")
        if sum(alpha) > self.max_order:
            raise ResolutionError(
                f"grid: derivative order {sum(alpha)} exceeds n/2 - 1 = {self.max_order}"
            )
        return self._multiplier_cache(alpha)

    def _multiplier_cache(self, alpha):
        cache = self.__dict__.setdefault("_mult_cache", {})
        if alpha not in cache:
            m = np.ones((1,) * self.dim, dtype=complex)
            for ax, a in enumerate(alpha):
                if a:
                    m = m * self._axis_factor(ax, a)
            cache[alpha] = m
        return cache[alpha]

    def sobolev_weight(self, m: int) -> np.ndarray:
        """``sum_{|alpha|<=m} |multiplier_alpha|^2`` including rfft multiplicity."""
        if m < 0:
            raise GridError(f"grid: Sobolev order must be >= 0, got {m}")
        if m > self.max_order:
            raise ResolutionError(f"grid: Sobolev order {m} exceeds n/2 - 1 = {self.max_order}")
        cache = self.__dict__.setdefault("_weight_cache", {})
        if m not in cache:
            w = np.zeros(self.rfft_shape)
            for alpha in multi_indices(self.dim, m):
                w = w + np.abs(self.multiplier(alpha)) ** 2
            cache[m] = w * self._rfft_multiplicity
        return cache[m]

    @property
    def rfft_shape(self) -> tuple[int, ...]:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    # -- transforms on raw arrays (leading axes are components) --

    def fft(self, values: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(values, axes=self.axes)

    def ifft(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(coeffs, s=self.shape, axes=self.axes)

    def derivative(self, values: np.ndarray, alpha: Sequence[int]) -> np.ndarray:
        """``d^alpha`` applied along the trailing grid axes of ``values``."""
        mult = self.multiplier(alpha)
        if not any(alpha):
            return np.array(values, dtype=float, copy=True)
        return self.ifft(self.fft(values) * mult)

    def gradient(self, values: np.ndarray) -> np.ndarray:
        """Array of shape ``(dim, *values.shape)`` holding all first partials."""
        vhat = self.fft(values)
        return np.stack([self.ifft(vhat * self.multiplier(_unit(self.dim, i))) for i in range(self.dim)])

    def laplacian(self, values: np.ndarray) -> np.ndarray:
        mult = sum(self.multiplier(tuple(2 * e for e in _unit(self.dim, i))) for i in range(self.dim))
        return self.ifft(self.fft(values) * mult)

    def l2_norm_sq(self, values: np.ndarray) -> float:
        """Trapezoidal ``||f||^2`` summed over all leading components."""
        return float(self.cell_volume * np.sum(np.asarray(values, dtype=float) ** 2))

    def sobolev_norm_sq(self, values: np.ndarray, m: int) -> float:
        """``||f||_m^2`` summed over all leading components."""
        if m == 0:
            return self.l2_norm_sq(values)
        coef = self.fft(values)
        return self.sobolev_norm_sq_hat(coef, m)

    def sobolev_norm_sq_hat(self, coef: np.ndarray, m: int) -> float:
        """``||f||_m^2`` from precomputed rfft coefficients."""
        w = self.sobolev_weight(m)
        return float(self.cell_volume / self.size * np.sum(w * (coef.real**2 + coef.imag**2)))

    def embedding_constant(self, r: int) -> float:
        """Smallest ``kappa`` with ``max|f| <= kappa ||f||_r`` for all grid functions.

        The extremal function is the discrete reproducing kernel, so the value
        is exact for the discrete norms used here.
        """
        w = self.sobolev_weight(r) / self._rfft_multiplicity
        inv = self._rfft_multiplicity / w
        return math.sqrt(float(np.sum(inv)) / (2.0 * np.pi) ** self.dim)


def _unit(dim: int, i: int) -> tuple[int, ...]:
    return tuple(1 if j == i else 0 for j in range(dim))


@dataclass(frozen=True, eq=False)
class Field:
    """Grid function with ``c`` components; ``values`` has shape ``(c, *grid.shape)``."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape == self.grid.shape:
            vals = vals[None]
        if vals.shape[1:] != self.grid.shape:
            raise GridError(
                f"grid: field shape {vals.shape} incompatible with grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise GridError("grid: field contains non-finite values")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def components(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_function(cls, grid: PeriodicGrid, *funcs) -> "Field":
        return cls(grid, np.stack([np.broadcast_to(f(*grid.coords), grid.shape) for f in funcs]))


@dataclass(frozen=True)
class SobolevNorm:
    """Discrete ``H^m`` norm with its per-multi-index breakdown (squared terms)."""

    order: int
    value: float
    breakdown: dict = field(default_factory=dict)


def _check_same_grid(*fields: Field):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridError(f"grid: grid mismatch {f.grid} vs {g}")
    return g


def spectral_derivative(f: Field, alpha: Sequence[int]) -> Field:
    """Derivative ``d^alpha f`` of the trigonometric interpolant."""
    return Field(f.grid, f.grid.derivative(f.values, tuple(alpha)))


def sobolev_norm(f: Field, m: int) -> SobolevNorm:
    """``||f||_m`` with one squared term per multi-index ``|alpha| <= m``."""
    g = f.grid
    g.sobolev_weight(m)  # validates the order
    coef = g.fft(f.values)
    mult = g._rfft_multiplicity
    breakdown = {}
    for alpha in multi_indices(g.dim, m):
        w = np.abs(g.multiplier(alpha)) ** 2 * mult
        breakdown[alpha] = float(g.cell_volume / g.size * np.sum(w * np.abs(coef) ** 2))
    return SobolevNorm(m, math.sqrt(sum(breakdown.values())), breakdown)


def hat_norm(f: Field | np.ndarray, s: int, grid: PeriodicGrid | None = None) -> float:
    """``||f||_sup + ||grad f||_{s-1}`` with the sup taken as the grid maximum."""
    if isinstance(f, Field):
        grid, values = f.grid, f.values
    else:
        values = np.asarray(f, dtype=float)
    if grid is None:
        raise GridError("grid: hat_norm of a raw array needs a grid")
    if s < 1:
        raise GridError(f"grid: hat norm order must be >= 1, got {s}")
    sup = float(np.max(np.abs(values))) if values.size else 0.0
    grad = grid.gradient(values)
    return sup + math.sqrt(grid.sobolev_norm_sq(grad, s - 1))


def _dealiased_product(grid: PeriodicGrid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product with the 3/2 padding rule; result is band-limited to the grid."""
    n = grid.n
    npad = 3 * n // 2
    ah, bh = np.fft.fftn(a, axes=grid.axes), np.fft.fftn(b, axes=grid.axes)
    ap, bp = _pad(ah, n, npad, grid.dim), _pad(bh, n, npad, grid.dim)
    scale = (npad / n) ** grid.dim
    prod = (np.fft.ifftn(ap, axes=grid.axes).real * scale) * (np.fft.ifftn(bp, axes=grid.axes).real * scale)
    ph = np.fft.fftn(prod, axes=grid.axes)
    return np.fft.ifftn(_truncate(ph, n, npad, grid.dim), axes=grid.axes).real / scale


def _pad(coef: np.ndarray, n: int, npad: int, dim: int) -> np.ndarray:
    out = np.zeros(coef.shape[:-dim] + (npad,) * dim, dtype=complex)
    half = n // 2
    ranges_src = [np.r_[0:half, n - half + 1:n]]
    ranges_dst = [np.r_[0:half, npad - half + 1:npad]]
    idx_src = np.ix_(*(ranges_src * dim))
    idx_dst = np.ix_(*(ranges_dst * dim))
    out[(Ellipsis,) + idx_dst] = coef[(Ellipsis,) + idx_src]
    return out


def _truncate(coef: np.ndarray, n: int, npad: int, dim: int) -> np.ndarray:
    out = np.zeros(coef.shape[:-dim] + (n,) * dim, dtype=complex)
    half = n // 2
    idx_src = np.ix_(*([np.r_[0:half, npad - half + 1:npad]] * dim))
    idx_dst = np.ix_(*([np.r_[0:half, n - half + 1:n]] * dim))
    out[(Ellipsis,) + idx_dst] = coef[(Ellipsis,) + idx_src]
    return out


def commutator(xi: Field, w: Field, alpha: Sequence[int], dealias: bool = False) -> Field:
    """``G_alpha(xi, w) = d^alpha(xi w) - xi d^alpha w`` with pointwise products."""
    g = _check_same_grid(xi, w)
    alpha = tuple(alpha)
    if not any(alpha):
        return Field(g, np.zeros(np.broadcast(xi.values, w.values).shape))
    if dealias:
        prod = _dealiased_product(g, xi.values, w.values)
        dw = g.derivative(w.values, alpha)
        second = _dealiased_product(g, xi.values, dw)
    else:
        prod = xi.values * w.values
        second = xi.values * g.derivative(w.values, alpha)
    return Field(g, g.derivative(prod, alpha) - second)


def trig_corpus(grid: PeriodicGrid, count: int, rng: np.random.Generator, max_mode: int = 4) -> list[Field]:
    """Seeded scalar trigonometric polynomials with modes ``|k_i| <= max_mode``."""
    out = []
    modes = list(itertools.product(range(-max_mode, max_mode + 1), repeat=grid.dim))
    for _ in range(count):
        n_terms = int(rng.integers(1, 5))
        vals = np.full(grid.shape, float(rng.normal()))
        for _ in range(n_terms):
            k = modes[int(rng.integers(len(modes)))]
            phase = sum(ki * xi for ki, xi in zip(k, grid.coords))
            vals = vals + rng.normal() * np.cos(phase + rng.uniform(0, 2 * np.pi))
        out.append(Field(grid, vals))
    return out


@dataclass(frozen=True)
class InequalityReport:
    """Maximum observed ratios over a corpus of field pairs."""

    product_ratio: float
    commutator_ratio: float
    evaluated: int
    skipped: int
    c_corpus: float | None
    passed: bool


def inequality_harness(
    corpus: Iterable[tuple[Field, Field]],
    m: int,
    s: int,
    r: int,
    c_corpus: float | None = None,
) -> InequalityReport:
    """Ratios for the product and commutator inequalities over a corpus.

    Product: ``||f g||_r / (||f||_hat_s ||g||_r)``.
    Commutator: ``max_{1<=|alpha|<=m} ||G_alpha(f, g)||_{m-|alpha|} / (||grad f||_{s-1} ||g||_{m-1})``.
    Pairs with a vanishing denominator are skipped and counted.
    """
    prod_max = 0.0
    comm_max = 0.0
    evaluated = skipped = 0
    for f, g in corpus:
        grid = _check_same_grid(f, g)
        fh = hat_norm(f, s)
        gr = math.sqrt(grid.sobolev_norm_sq(g.values, r))
        denom = fh * gr
        if denom > 0:
            prod_max = max(prod_max, math.sqrt(grid.sobolev_norm_sq(f.values * g.values, r)) / denom)
        grad_f = math.sqrt(grid.sobolev_norm_sq(grid.gradient(f.values), s - 1))
        g_low = math.sqrt(grid.sobolev_norm_sq(g.values, m - 1))
        cdenom = grad_f * g_low
        if denom <= 0 and cdenom <= 0:
            skipped += 1
            continue
        evaluated += 1
        if cdenom > 0:
            for alpha in multi_indices(grid.dim, m):
                if not any(alpha):
                    continue
                G = commutator(f, g, alpha)
                num = math.sqrt(grid.sobolev_norm_sq(G.values, m - sum(alpha)))
                comm_max = max(comm_max, num / cdenom)
    ok = math.isfinite(prod_max) and math.isfinite(comm_max)
    if c_corpus is not None:
        ok = ok and prod_max <= c_corpus and comm_max <= c_corpus
    return InequalityReport(prod_max, comm_max, evaluated, skipped, c_corpus, ok)


def snapshot_bytes(f: Field) -> bytes:
    """Binary snapshot: magic, little-endian int64 header (dim, n, c), float64 data."""
    header = _SNAPSHOT_MAGIC + struct.pack("<qqq", f.grid.dim, f.grid.n, f.components)
    return header + np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C")


def write_snapshot(path: str | Path, f: Field) -> None:
    Path(path).write_bytes(snapshot_bytes(f))


def read_snapshot(path: str | Path) -> Field:
    raw = Path(path).read_bytes()
    if raw[:8] != _SNAPSHOT_MAGIC:
        raise GridError(f"grid: {path} is not a field snapshot")
    dim, n, c = struct.unpack("<qqq", raw[8:32])
    grid = PeriodicGrid(dim, n)
    vals = np.frombuffer(raw[32:], dtype="<f8").reshape((c,) + grid.shape)
    return Field(grid, vals)
