"""Trace maps and transfer matrices for Sturmian Jacobi operators.

Two models, both parametrized by positive couplings:

  diagonal      a(n) = 1,  b(n) = lambda1 * s(n)
  off-diagonal  a(n) = lambda2 + (lambda1 - lambda2) * s(n),  b(n) = 0

with s(n) the exact Sturmian letter of the continued fraction.  The level
quantities are x_k = Tr M_k and z_k = Tr(M_{k-1} M_k), driven by

  x_{k+1} = z_k S_{a-1}(x_k) - x_{k-1} S_{a-2}(x_k),   a = a_{k+1},
  z_{k+1} = z_k S_a(x_k)     - x_{k-1} S_{a-1}(x_k),

where S_l are second-kind Chebyshev polynomials (S_0 = 1, S_{-1} = 0,
S_{-2} = -1).  Initial values:

  off-diagonal: x_{-1} = (l1^2 + l2^2)/(l1 l2), x_0 = E/l2, z_0 = E/l1
  diagonal:     x_{-1} = 2,                     x_0 = E,    z_0 = E - l1

Orbits conserve the Fricke-Vogt quantity
x_k^2 + x_{k+1}^2 + z_{k+1}^2 - x_k x_{k+1} z_{k+1} = c^2 + 4 with
c = (l1^2 - l2^2)/(l1 l2) (off-diagonal) or c = l1 (diagonal).

Escape test: once |x_{N-1}| <= 2+delta < |x_N|, |z_N|, the orbit grows at
least like exp(c(delta) G_{k-N}) with G_k = G_{k-1} + a_k G_{k-2} and
c(delta) = ln(1+delta), so membership in the spectrum is excluded.  The
matrix recursion M_k = M_{k-2} M_{k-1}^{a_k} reproduces the same traces;
for k >= 1, M_k equals the ordered one-step product over the first
den_k sites, den_k the standard convergent denominator.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from .cf import ContinuedFraction, sturmian_letter, sturmian_word
from .errors import CFPrecisionError, ValidationError
from .numerics import OVERFLOW_GUARD, LogMatrix2, logmat_mul, logmat_pow

PHI = (1.0 + math.sqrt(5.0)) / 2.0


# ---------------------------------------------------------------------------
# Model parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """Couplings of a Sturmian Jacobi operator."""

    lambda1: float
    lambda2: float = 1.0
    kind: Literal["diagonal", "offdiagonal"] = "offdiagonal"

    def __post_init__(self):
        if self.kind not in ("diagonal", "offdiagonal"):
            raise ValidationError(f"unknown model kind {self.kind!r}")
        if self.kind == "offdiagonal":
            if not (self.lambda1 > 0 and self.lambda2 > 0):
                raise ValidationError("off-diagonal model needs lambda1, lambda2 > 0")
        else:
            # lambda1 = 0 is the free chain, kept as a degenerate test case
            if self.lambda1 < 0:
                raise ValidationError("diagonal model needs lambda1 >= 0")

    @staticmethod
    def diagonal(lambda1: float) -> "ModelParams":
        return ModelParams(lambda1=lambda1, lambda2=1.0, kind="diagonal")

    @staticmethod
    def offdiagonal(lambda1: float, lambda2: float) -> "ModelParams":
        return ModelParams(lambda1=lambda1, lambda2=lambda2, kind="offdiagonal")

    @staticmethod
    def offdiagonal_with_coupling(c: float, lambda2: float = 1.0) -> "ModelParams":
        """Off-diagonal params with prescribed invariant coupling c."""
        lam1 = 0.5 * lambda2 * (c + math.sqrt(c * c + 4.0))
        return ModelParams(lambda1=lam1, lambda2=lambda2, kind="offdiagonal")

    @property
    def coupling(self) -> float:
        """Invariant coupling: (l1^2-l2^2)/(l1 l2) off-diagonal, l1 diagonal."""
        if self.kind == "offdiagonal":
            return (self.lambda1 ** 2 - self.lambda2 ** 2) / (self.lambda1 * self.lambda2)
        return self.lambda1

    @property
    def spectral_window(self) -> float:
        """K >= 4 with the spectrum inside [-K+1, K-1]."""
        if self.kind == "diagonal":
            return max(4.0, self.lambda1 + 3.0)
        return max(4.0, 2.0 * max(self.lambda1, self.lambda2) + 1.0)


def lambda_delta(delta: float) -> float:
    """Coupling threshold for the complex delta-fattened approximants."""
    u = 1.0 + delta
    return math.sqrt(12.0 * u * u + 8.0 * u ** 3 + 4.0)


# ---------------------------------------------------------------------------
# Chebyshev polynomials of the second kind (S-convention)
# ---------------------------------------------------------------------------

_CHEB_RECURSION_MAX = 64


def chebyshev_S(l: int, x: complex) -> complex:
    """S_l(x) with S_0 = 1, S_{-1} = 0 and S_{-2} = -1.

    Three-term recursion for small degree, closed form through
    x = 2 cos(theta) otherwise; overflow degrades to inf rather than
    raising, mirroring orbit blow-up.
    """
    if l < -2:
        raise ValidationError("chebyshev_S needs l >= -2")
    if l == -2:
        return -1.0 + 0.0j
    if l == -1:
        return 0.0 + 0.0j
    if l == 0:
        return 1.0 + 0.0j
    x = complex(x)
    if l <= _CHEB_RECURSION_MAX:
        s_prev, s = 0.0 + 0.0j, 1.0 + 0.0j
        for _ in range(l):
            s_prev, s = s, x * s - s_prev
            if not (abs(s.real) < OVERFLOW_GUARD and abs(s.imag) < OVERFLOW_GUARD):
                if not cmath.isfinite(s):
                    return complex(math.inf, 0.0)
        return s
    theta = np.arccos(np.complex128(x) / 2.0)
    sin_t = np.sin(theta)
    if abs(sin_t) < 1e-9:
        # x near +-2: S_l(+-2) = (+-1)^l (l+1)
        sign = 1.0 if x.real >= 0 else (-1.0) ** l
        return complex(sign * (l + 1))
    with np.errstate(over="ignore", invalid="ignore"):
        val = np.sin((l + 1) * theta) / sin_t
    v = complex(val)
    if not cmath.isfinite(v):
        return complex(math.inf, 0.0)
    return v


# ---------------------------------------------------------------------------
# Trace orbits
# ---------------------------------------------------------------------------

def initial_traces(p: ModelParams, E: complex) -> tuple[complex, complex, complex]:
    """(x_{-1}, x_0, z_0) for the given model."""
    E = complex(E)
    if p.kind == "offdiagonal":
        l1, l2 = p.lambda1, p.lambda2
        return ((l1 * l1 + l2 * l2) / (l1 * l2), E / l2, E / l1)
    return (2.0 + 0.0j, E, E - p.lambda1)


@dataclass
class TraceOrbit:
    """Trace sequences of one energy: xs holds x_{-1}..x_K, zs holds z_0..z_K."""

    energy: complex
    xs: list
    zs: list
    escape_index: Optional[int]
    verdict: str  # "escaped" | "bounded-so-far"
    delta: float

    @property
    def kmax(self) -> int:
        return len(self.zs) - 1

    def x(self, k: int) -> complex:
        if k < -1 or k > self.kmax:
            raise ValidationError(f"orbit holds x_{{-1}}..x_{self.kmax}, not x_{k}")
        return self.xs[k + 1]

    def z(self, k: int) -> complex:
        if k < 0 or k > self.kmax:
            raise ValidationError(f"orbit holds z_0..z_{self.kmax}, not z_{k}")
        return self.zs[k]


def trace_orbit(
    p: ModelParams,
    cf: ContinuedFraction,
    E: complex,
    k_max: int,
    delta: float = 0.1,
) -> TraceOrbit:
    """Iterate the trace recursion until k_max or until escape fires.

    Escape at index N means |x_{N-1}| <= 2+delta while |x_N| > 2+delta and
    |z_N| > 2+delta; past that point growth is superexponential, so the
    orbit stops there.  Entries are truncated below the 1e100 overflow
    guard.
    """
    if k_max < 1:
        raise ValidationError("k_max must be >= 1")
    if delta < 0:
        raise ValidationError("delta must be >= 0")
    try:
        cf.ensure(k_max)
    except CFPrecisionError as exc:
        raise CFPrecisionError(
            f"trace orbit to k={k_max} needs {k_max} quotients: {exc}",
            required=k_max,
        ) from exc

    bar = 2.0 + delta
    x_m1, x_0, z_0 = initial_traces(p, E)
    xs = [x_m1, x_0]
    zs = [z_0]
    escape = None
    if abs(x_m1) <= bar and abs(x_0) > bar and abs(z_0) > bar:
        escape = 0
    k = 0
    while escape is None and k < k_max:
        a = cf.quotient(k + 1)
        x_prev, x_cur, z_cur = xs[-2], xs[-1], zs[-1]
        s_a2, s_a1, s_a = (
            chebyshev_S(a - 2, x_cur),
            chebyshev_S(a - 1, x_cur),
            chebyshev_S(a, x_cur),
        )
        x_next = z_cur * s_a1 - x_prev * s_a2
        z_next = z_cur * s_a - x_prev * s_a1
        if not (
            cmath.isfinite(x_next)
            and cmath.isfinite(z_next)
            and abs(x_next) < OVERFLOW_GUARD
            and abs(z_next) < OVERFLOW_GUARD
        ):
            # criterion check on the exact (unstored) values
            if abs(x_cur) <= bar:
                escape = k + 1
            break
        xs.append(x_next)
        zs.append(z_next)
        k += 1
        if abs(x_cur) <= bar and abs(x_next) > bar and abs(z_next) > bar:
            escape = k
    verdict = "escaped" if escape is not None else "bounded-so-far"
    return TraceOrbit(
        energy=complex(E), xs=xs, zs=zs, escape_index=escape,
        verdict=verdict, delta=delta,
    )


def fricke_vogt_residual(orbit: TraceOrbit, p: ModelParams, k: int) -> float:
    """|x_k^2 + x_{k+1}^2 + z_{k+1}^2 - x_k x_{k+1} z_{k+1} - (c^2+4)|."""
    x_k, x_k1, z_k1 = orbit.x(k), orbit.x(k + 1), orbit.z(k + 1)
    c = p.coupling
    return abs(x_k * x_k + x_k1 * x_k1 + z_k1 * z_k1 - x_k * x_k1 * z_k1 - (c * c + 4.0))


# ---------------------------------------------------------------------------
# Vectorized trace evaluation over real energy grids
# ---------------------------------------------------------------------------

def _cheb_vec(l: int, x: np.ndarray) -> np.ndarray:
    """S_l over a real array; non-finite entries propagate as +-inf."""
    if l == -2:
        return np.full_like(x, -1.0)
    if l == -1:
        return np.zeros_like(x)
    if l == 0:
        return np.ones_like(x)
    if l <= _CHEB_RECURSION_MAX:
        s_prev = np.zeros_like(x)
        s = np.ones_like(x)
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(l):
                s_prev, s = s, x * s - s_prev
        return s
    out = np.empty_like(x)
    ax = np.abs(x)
    inside = ax <= 2.0
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        th = np.arccos(np.clip(x[inside], -2.0, 2.0) / 2.0)
        out[inside] = np.where(
            np.abs(np.sin(th)) < 1e-12,
            (l + 1.0) * np.where(x[inside] >= 0, 1.0, (-1.0) ** l),
            np.sin((l + 1) * th) / np.sin(th),
        )
        t = np.arccosh(np.maximum(ax[~inside] / 2.0, 1.0))
        big = (l + 1) * t > 700.0
        grow = np.where(
            big, np.inf, np.sinh((l + 1) * np.maximum(t, 1e-300)) / np.sinh(np.maximum(t, 1e-300))
        )
        sign = np.where(x[~inside] >= 0, 1.0, (-1.0) ** l)
        out[~inside] = sign * grow
    return out


def trace_arrays(
    p: ModelParams, cf: ContinuedFraction, E: np.ndarray, k: int
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """x_{-1}..x_k and z_0..z_k over a real energy grid.

    Overflowed entries become +-inf; callers treat those as |x| > 2.
    """
    E = np.asarray(E, dtype=float)
    cf.ensure(max(k, 1))
    if p.kind == "offdiagonal":
        l1, l2 = p.lambda1, p.lambda2
        xs = [np.full_like(E, (l1 * l1 + l2 * l2) / (l1 * l2)), E / l2]
        zs = [E / l1]
    else:
        xs = [np.full_like(E, 2.0), E.copy()]
        zs = [E - p.lambda1]
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(k):
            a = cf.quotient(j + 1)
            x_prev, x_cur, z_cur = xs[-2], xs[-1], zs[-1]
            s_a2 = _cheb_vec(a - 2, x_cur)
            s_a1 = _cheb_vec(a - 1, x_cur)
            s_a = _cheb_vec(a, x_cur)
            xs.append(z_cur * s_a1 - x_prev * s_a2)
            zs.append(z_cur * s_a - x_prev * s_a1)
    return xs, zs


# ---------------------------------------------------------------------------
# Growth floor
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrowthFloor:
    """G_k = G_{k-1} + a_k G_{k-2} with G_0 = G_{-1} = 1 (exact integers)."""

    values: tuple

    def G(self, k: int) -> int:
        if k < -1 or k > len(self.values) - 2:
            raise ValidationError(f"growth floor holds G_{{-1}}..G_{len(self.values) - 2}")
        return self.values[k + 1]


def growth_floor(cf: ContinuedFraction, k: int) -> GrowthFloor:
    if k < 0:
        raise ValidationError("k must be >= 0")
    vals = [1, 1]  # G_{-1}, G_0
    for j in range(1, k + 1):
        vals.append(vals[-1] + cf.quotient(j) * vals[-2])
    return GrowthFloor(values=tuple(vals))


# ---------------------------------------------------------------------------
# Transfer matrices
# ---------------------------------------------------------------------------

def _seed_matrices(p: ModelParams, E: complex) -> tuple[LogMatrix2, LogMatrix2]:
    """(M_{-1}, M_0) for the matrix recursion."""
    E = complex(E)
    if p.kind == "offdiagonal":
        l1, l2 = p.lambda1, p.lambda2
        m_m1 = np.array([[l2 / l1, 0.0], [0.0, l1 / l2]], dtype=complex)
        m_0 = np.array([[E / l2, -1.0 / l2], [l2, 0.0]], dtype=complex)
    else:
        l1 = p.lambda1
        m_m1 = np.array([[1.0, -l1], [0.0, 1.0]], dtype=complex)
        m_0 = np.array([[E, -1.0], [1.0, 0.0]], dtype=complex)
    return LogMatrix2.from_matrix(m_m1), LogMatrix2.from_matrix(m_0)


def transfer_matrix(p: ModelParams, cf: ContinuedFraction, E: complex, k: int) -> LogMatrix2:
    """M_k as a log-scaled matrix via M_k = M_{k-2} M_{k-1}^{a_k}."""
    if k < -1:
        raise ValidationError("k must be >= -1")
    m_m1, m_0 = _seed_matrices(p, E)
    if k == -1:
        return m_m1
    if k == 0:
        return m_0
    prev, cur = m_m1, m_0
    for j in range(1, k + 1):
        prev, cur = cur, logmat_mul(prev, logmat_pow(cur, cf.quotient(j)))
    return cur


def site_one_step(p: ModelParams, cf: ContinuedFraction, E: complex, n: int) -> np.ndarray:
    """One-step transfer factor T_n(E) as a dense 2x2."""
    letter = sturmian_letter(cf, n)
    E = complex(E)
    if p.kind == "offdiagonal":
        a = p.lambda2 + (p.lambda1 - p.lambda2) * letter
        return np.array([[E / a, -1.0 / a], [a, 0.0]], dtype=complex)
    b = p.lambda1 * letter
    return np.array([[E - b, -1.0], [1.0, 0.0]], dtype=complex)


def site_transfer(p: ModelParams, cf: ContinuedFraction, E: complex, n: int) -> LogMatrix2:
    """F_n(E) = T_n(E) ... T_1(E), log-scaled."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    letters = sturmian_word(cf, 1, n)
    E = complex(E)
    result = LogMatrix2.identity()
    for letter in letters:
        if p.kind == "offdiagonal":
            a = p.lambda2 + (p.lambda1 - p.lambda2) * float(letter)
            fac = np.array([[E / a, -1.0 / a], [a, 0.0]], dtype=complex)
        else:
            b = p.lambda1 * float(letter)
            fac = np.array([[E - b, -1.0], [1.0, 0.0]], dtype=complex)
        result = logmat_mul(LogMatrix2.from_matrix(fac), result)
    return result


def site_prefix_max_lognorm(p: ModelParams, cf: ContinuedFraction, E: complex, N: int) -> float:
    """max over 1 <= n <= N of log ||F(n, E)||, in one pass."""
    if N < 1:
        raise ValidationError("N must be >= 1")
    letters = sturmian_word(cf, 1, N)
    E = complex(E)
    result = LogMatrix2.identity()
    best = -math.inf
    for letter in letters:
        if p.kind == "offdiagonal":
            a = p.lambda2 + (p.lambda1 - p.lambda2) * float(letter)
            fac = np.array([[E / a, -1.0 / a], [a, 0.0]], dtype=complex)
        else:
            b = p.lambda1 * float(letter)
            fac = np.array([[E - b, -1.0], [1.0, 0.0]], dtype=complex)
        result = logmat_mul(LogMatrix2.from_matrix(fac), result)
        best = max(best, result.norm_log())
    return best


# ---------------------------------------------------------------------------
# Pseudospectrum membership
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MembershipResult:
    status: str  # "out" | "undecided-in"
    escape_index: Optional[int]
    reason: Optional[str]  # "lemma1" | "escape" | None
    orbit: Optional[TraceOrbit]


def pseudospectrum_member(
    p: ModelParams,
    cf: ContinuedFraction,
    E: complex,
    k_max: int,
    delta: float = 0.1,
) -> MembershipResult:
    """Escape-time membership test for the bounded-orbit set.

    "out" is analytically certified (escape criterion or, for the
    off-diagonal model at real energy, unboundedness from
    |x_0|, |z_0| > 2); "undecided-in" only means bounded through k_max.
    """
    if delta <= 0:
        raise ValidationError("delta must be > 0")
    if k_max < 2:
        raise ValidationError("k_max must be >= 2")
    E = complex(E)
    if E.imag != 0.0 and p.coupling <= lambda_delta(delta):
        warnings.warn(
            "coupling below the complex-approximant threshold "
            f"lambda(delta) = {lambda_delta(delta):.3f}; delta-fattened "
            "membership is not certified",
            stacklevel=2,
        )
    if p.kind == "offdiagonal" and E.imag == 0.0:
        x_m1, x_0, z_0 = initial_traces(p, E)
        if abs(x_0) > 2.0 and abs(z_0) > 2.0:
            return MembershipResult(
                status="out", escape_index=0, reason="lemma1", orbit=None
            )
    orbit = trace_orbit(p, cf, E, k_max, delta)
    if orbit.verdict == "escaped":
        return MembershipResult(
            status="out", escape_index=orbit.escape_index, reason="escape", orbit=orbit
        )
    return MembershipResult(status="undecided-in", escape_index=None, reason=None, orbit=orbit)
