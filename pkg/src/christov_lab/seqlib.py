"""Fibonacci-contraction sequences.

A sequence of non-negative numbers ``a_0, a_1, ...`` is a Fibonacci
contraction with ratio ``alpha0`` when

    a_l <= alpha0 * (a_{l-1} + a_{l-2})    for every l >= 2,

with ``0 < alpha0 < 1/2``.  Such sequences are summable with an explicit
bound, are dominated by a Fibonacci envelope, and decay geometrically when
``alpha0 <= 1/6``.

All functions are generic in the number type: they work with ``float``,
``fractions.Fraction``, ``gmpy2.mpq`` or anything else that supports the
field operations and ordering.  Comparisons are exact, so with a rational
type every check is an exact arithmetic statement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

__all__ = [
    "SeqlibError",
    "SequenceLengthError",
    "PreconditionError",
    "DomainError",
    "FibSequence",
    "CheckResult",
    "TailBound",
    "fibonacci_number",
    "check_fibonacci_condition",
    "first_failure",
    "tail_bound",
    "fibonacci_envelope",
    "geometric_decay_bound",
    "cauchy_gap_bound",
    "equality_recursion",
]


class SeqlibError(ValueError):
    """Base class for seqlib errors."""


class SequenceLengthError(SeqlibError):
    """Raised when a sequence is too short for the requested check."""


class PreconditionError(SeqlibError):
    """Raised when the contraction condition fails at some index."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class DomainError(SeqlibError):
    """Raised when ``alpha0`` lies outside the range a bound is valid for."""


@dataclass(frozen=True)
class FibSequence:
    """Non-negative sequence together with a contraction ratio.

    Parameters
    ----------
    values : sequence of numbers
        The terms ``a_0, a_1, ...``; each must be ``>= 0``.
    alpha0 : number
        Contraction ratio, strictly between 0 and 1/2.
    """

    values: tuple
    alpha0: Any

    def __init__(self, values: Sequence, alpha0):
        vals = tuple(values)
        for i, a in enumerate(vals):
            if not a >= 0:
                raise SeqlibError(f"seqlib: entry a_{i} = {a!r} is negative or NaN")
        if not (0 < alpha0 and 2 * alpha0 < 1):
            raise SeqlibError(f"seqlib: alpha0 = {alpha0!r} must satisfy 0 < alpha0 < 1/2")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "alpha0", alpha0)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def beta0(self):
        """``a_0 + a_1``."""
        if len(self.values) < 2:
            raise SequenceLengthError("seqlib: beta0 needs at least two entries")
        return self.values[0] + self.values[1]


@dataclass(frozen=True)
class CheckResult:
    """Outcome of the contraction check at one index ``l``."""

    index: int
    lhs: Any
    rhs: Any
    passed: bool


@dataclass(frozen=True)
class TailBound:
    """Closed-form summability bound for a Fibonacci contraction.

    ``partial_sum_bound`` bounds every prefix sum ``a_0 + ... + a_m``;
    ``tail_sum_bound`` bounds ``a_2 + ... + a_m``.
    """

    partial_sum_bound: Any
    tail_sum_bound: Any
    decay_rate: Any = None
    certificate: list = field(default_factory=list)


def fibonacci_number(k: int) -> int:
    """Return ``phi_k`` with ``phi_1 = phi_2 = 1`` (and ``phi_0 = 0``).

    Python integers are unbounded, so the value is exact for every ``k``.
    """
    if k < 0:
        raise SeqlibError(f"seqlib: Fibonacci index {k} must be non-negative")
    a, b = 0, 1
    for _ in range(k):
        a, b = b, a + b
    return a


def check_fibonacci_condition(seq: FibSequence) -> list[CheckResult]:
    """Check ``a_l <= alpha0 (a_{l-1} + a_{l-2})`` at every ``l >= 2``.

    The comparison is exact; no tolerance is applied.
    """
    a = seq.values
    if len(a) < 3:
        raise SequenceLengthError(
            f"seqlib: condition check needs at least 3 entries, got {len(a)}"
        )
    alpha = seq.alpha0
    out = []
    for l in range(2, len(a)):
        rhs = alpha * (a[l - 1] + a[l - 2])
        out.append(CheckResult(l, a[l], rhs, bool(a[l] <= rhs)))
    return out


def first_failure(certificate: Sequence[CheckResult]) -> int | None:
    """Index of the first failing check, or ``None`` if all pass."""
    for c in certificate:
        if not c.passed:
            return c.index
    return None


def _require_condition(seq: FibSequence) -> list[CheckResult]:
    cert = check_fibonacci_condition(seq)
    bad = first_failure(cert)
    if bad is not None:
        c = cert[bad - 2]
        raise PreconditionError(
            f"seqlib: contraction condition fails at l = {bad}: "
            f"a_l = {c.lhs!r} > alpha0 (a_(l-1) + a_(l-2)) = {c.rhs!r}",
            bad,
        )
    return cert


def tail_bound(seq: FibSequence) -> TailBound:
    """Closed-form bound on the partial sums of a Fibonacci contraction.

    ``sum_{l=2}^m a_l <= alpha0 / (1 - 2 alpha0) * (2 a_1 + a_0)`` for every
    ``m``; adding ``a_0 + a_1`` bounds the full prefix sums.
    """
    cert = _require_condition(seq)
    a0, a1 = seq.values[0], seq.values[1]
    alpha = seq.alpha0
    tail = alpha / (1 - 2 * alpha) * (2 * a1 + a0)
    decay = 2 * alpha if 6 * alpha <= 1 else None
    return TailBound(tail + a0 + a1, tail, decay, cert)


def fibonacci_envelope(seq: FibSequence, k: int) -> tuple:
    """Envelope ``(alpha0^k phi_{2k} beta0, alpha0^k phi_{2k+1} beta0)``.

    The pair bounds ``a_{2k}`` and ``a_{2k+1}`` for ``k >= 1``.  Terms that
    are present in ``seq`` are checked against the envelope.
    """
    if k < 1:
        raise SeqlibError(f"seqlib: envelope index k = {k} must be >= 1")
    _require_condition(seq)
    beta = seq.beta0
    scale = seq.alpha0**k * beta
    even = scale * fibonacci_number(2 * k)
    odd = scale * fibonacci_number(2 * k + 1)
    a = seq.values
    if 2 * k < len(a) and not a[2 * k] <= even:
        raise AssertionError(f"seqlib: a_{2 * k} = {a[2 * k]!r} exceeds envelope {even!r}")
    if 2 * k + 1 < len(a) and not a[2 * k + 1] <= odd:
        raise AssertionError(f"seqlib: a_{2 * k + 1} = {a[2 * k + 1]!r} exceeds envelope {odd!r}")
    return even, odd


def geometric_decay_bound(seq: FibSequence, k: int):
    """Bound ``beta0 / 2^k`` on ``a_{2k}`` and ``a_{2k+1}``, valid for ``alpha0 <= 1/6``."""
    if not 6 * seq.alpha0 <= 1:
        raise DomainError(f"seqlib: decay bound requires alpha0 <= 1/6, got {seq.alpha0!r}")
    if k < 0:
        raise SeqlibError(f"seqlib: decay index k = {k} must be >= 0")
    _require_condition(seq)
    bound = seq.beta0 / 2**k
    a = seq.values
    for idx in (2 * k, 2 * k + 1):
        if idx < len(a) and not a[idx] <= bound:
            raise AssertionError(f"seqlib: a_{idx} = {a[idx]!r} exceeds decay bound {bound!r}")
    return bound


def cauchy_gap_bound(seq: FibSequence, n: int, m: int):
    """Upper bound ``5 beta0 / 2^floor(n/2)`` for ``sum_{l=n}^{m-1} a_l``."""
    if m <= n:
        raise SeqlibError(f"seqlib: Cauchy gap needs m > n, got n = {n}, m = {m}")
    if n < 0:
        raise SeqlibError(f"seqlib: Cauchy gap index n = {n} must be >= 0")
    if not 6 * seq.alpha0 <= 1:
        raise DomainError(f"seqlib: Cauchy gap requires alpha0 <= 1/6, got {seq.alpha0!r}")
    return 5 * seq.beta0 / 2 ** (n // 2)


def equality_recursion(a0, a1, alpha0, length: int) -> list:
    """Terms of ``a_l = alpha0 (a_{l-1} + a_{l-2})`` starting from ``a0, a1``."""
    if length < 2:
        raise SequenceLengthError("seqlib: recursion length must be >= 2")
    out = [a0, a1]
    for _ in range(length - 2):
        out.append(alpha0 * (out[-1] + out[-2]))
    return out
