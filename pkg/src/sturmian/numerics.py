"""Shared numerical kernels.

Symmetric tridiagonal eigensolver, complex shifted tridiagonal solves
(resolvent columns), adaptive Simpson quadrature, least-squares line fits,
and log-scaled 2x2 matrix products that never overflow.

Conventions
-----------
A tridiagonal matrix of size L stores one diagonal (length L) and one
off-diagonal (length L-1); symmetry is implied.  A log-scaled 2x2 matrix
represents ``exp(logscale) * entries`` with the largest entry modulus
normalized into [1/2, 2], so products of thousands of factors with unit
determinant stay representable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded

from .errors import ValidationError

OVERFLOW_GUARD = 1e100


# ---------------------------------------------------------------------------
# Tridiagonal matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TridiagMatrix:
    """Symmetric tridiagonal matrix: diag (length L) and offdiag (L-1)."""

    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        diag = np.asarray(self.diag, dtype=float)
        offdiag = np.asarray(self.offdiag, dtype=float)
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "offdiag", offdiag)
        if diag.ndim != 1 or diag.size < 1:
            raise ValidationError("diag must be a nonempty 1-d sequence")
        if offdiag.shape != (diag.size - 1,):
            raise ValidationError(
                f"offdiag must have length {diag.size - 1}, got {offdiag.size}"
            )
        for name, arr in (("diag", diag), ("offdiag", offdiag)):
            bad = np.flatnonzero(~np.isfinite(arr))
            if bad.size:
                raise ValidationError(
                    f"non-finite {name} entry at index {int(bad[0])}"
                )

    @property
    def n(self) -> int:
        return self.diag.size

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """H @ v for a vector or a matrix of column vectors."""
        diag = self.diag if v.ndim == 1 else self.diag[:, None]
        out = diag * v
        if self.n > 1:
            off = self.offdiag if v.ndim == 1 else self.offdiag[:, None]
            out[:-1] += off * v[1:]
            out[1:] += off * v[:-1]
        return out

    def norm_bound(self) -> float:
        """Gershgorin bound on the spectral radius."""
        r = np.abs(self.diag).astype(float)
        if self.n > 1:
            r[:-1] += np.abs(self.offdiag)
            r[1:] += np.abs(self.offdiag)
        return float(r.max())


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Full spectral decomposition; values ascending, vectors as columns."""

    values: np.ndarray
    vectors: np.ndarray


def _eigh_quality_ok(m: TridiagMatrix, vals, vecs) -> bool:
    """Sampled residual/orthogonality check against the 1e-10 contract."""
    n = m.n
    idx = np.unique(np.linspace(0, n - 1, min(n, 48)).astype(int))
    sub = vecs[:, idx]
    scale = max(m.norm_bound(), 1e-300)
    resid = np.abs(m.matvec(sub) - sub * vals[idx][None, :]).max()
    gram = sub.T @ vecs[:, idx]
    ortho = np.abs(gram - np.eye(idx.size)).max()
    return resid <= 1e-11 * scale and ortho <= 1e-11


def tridiag_eigh(m: TridiagMatrix) -> EigenSystem:
    """Full eigendecomposition of a symmetric tridiagonal matrix.

    Bisection + inverse iteration (stebz) first; if LAPACK balks or the
    sampled quality check misses the 1e-10 contract, fall back to the
    implicit-shift QL/QR driver (stev).  The default stemr driver is
    avoided: it fails to converge on the tightly clustered spectra of
    quasiperiodic operators.
    """
    if m.n == 1:
        return EigenSystem(values=m.diag.copy(), vectors=np.ones((1, 1)))
    try:
        vals, vecs = eigh_tridiagonal(m.diag, m.offdiag, lapack_driver="stebz")
        if _eigh_quality_ok(m, vals, vecs):
            return EigenSystem(values=vals, vectors=vecs)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = eigh_tridiagonal(m.diag, m.offdiag, lapack_driver="stev")
    return EigenSystem(values=vals, vectors=vecs)


def tridiag_solve_complex(
    m: TridiagMatrix, z: complex, rhs: np.ndarray
) -> np.ndarray:
    """Solve (H - z) x = rhs for complex z with Im z != 0.

    Banded LU with partial pivoting; stable for the near-spectrum shifts
    z = E + i/T used by the resolvent integrals.
    """
    z = complex(z)
    if z.imag == 0.0:
        raise ValidationError("shift must have nonzero imaginary part")
    rhs = np.asarray(rhs, dtype=complex)
    if rhs.shape[0] != m.n:
        raise ValidationError("rhs length mismatch")
    n = m.n
    ab = np.zeros((3, n), dtype=complex)
    ab[1, :] = m.diag - z
    if n > 1:
        ab[0, 1:] = m.offdiag
        ab[2, :-1] = m.offdiag
    return solve_banded((1, 1), ab, rhs)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

class QuadResult(NamedTuple):
    value: float
    error: float
    converged: bool
    nevals: int

    def __float__(self) -> float:
        return self.value


_MAX_INTERVALS = 2 ** 20


def quadrature(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-9,
    max_intervals: int = _MAX_INTERVALS,
) -> QuadResult:
    """Adaptive Simpson integration of f over [a, b].

    Mixed tolerance: the target is tol * (1 + |integral|).  Refinement is
    capped at `max_intervals` leaf intervals; on cap exhaustion the best
    estimate is returned with converged=False instead of raising, because
    resolvent integrands have spikes of width ~1/T that may legitimately
    exhaust a small budget.
    """
    if not (a < b):
        raise ValidationError("quadrature requires a < b")
    if not tol > 0:
        raise ValidationError("quadrature requires tol > 0")

    nevals = 0

    def feval(x: float) -> float:
        nonlocal nevals
        nevals += 1
        y = float(f(x))
        if not math.isfinite(y):
            raise ValidationError(f"integrand not finite at x={x!r}")
        return y

    fa, fm, fb = feval(a), feval(0.5 * (a + b)), feval(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    budget = tol * (1.0 + abs(whole))

    # stack entries: (a, b, fa, fm, fb, simpson, local budget)
    stack = [(a, b, fa, fm, fb, whole, budget)]
    total = 0.0
    err_total = 0.0
    intervals = 0
    converged = True
    width_floor = (b - a) * 1e-15

    while stack:
        xa, xb, ya, ym, yb, s, eps = stack.pop()
        xm = 0.5 * (xa + xb)
        xl, xr = 0.5 * (xa + xm), 0.5 * (xm + xb)
        yl, yr = feval(xl), feval(xr)
        sl = (xm - xa) / 6.0 * (ya + 4.0 * yl + ym)
        sr = (xb - xm) / 6.0 * (ym + 4.0 * yr + yb)
        delta = sl + sr - s
        if abs(delta) <= 15.0 * eps or (xb - xa) < width_floor:
            total += sl + sr + delta / 15.0
            err_total += abs(delta) / 15.0
            intervals += 2
        elif intervals + len(stack) >= max_intervals:
            total += sl + sr
            err_total += abs(delta)
            intervals += 2
            converged = False
        else:
            half = 0.5 * eps
            stack.append((xa, xm, ya, yl, ym, sl, half))
            stack.append((xm, xb, ym, yr, yb, sr, half))

    return QuadResult(total, err_total, converged, nevals)


def quadrature_halfline(
    f: Callable[[float], float],
    a: float,
    tol: float = 1e-9,
    max_intervals: int = _MAX_INTERVALS,
) -> QuadResult:
    """Integrate f over [a, inf) via the substitution x = a + u/(1-u).

    Intended for integrands decaying at least like 1/x^2.
    """

    def g(u: float) -> float:
        if u >= 1.0:
            return 0.0
        w = 1.0 - u
        return f(a + u / w) / (w * w)

    return quadrature(g, 0.0, 1.0 - 1e-12, tol=tol, max_intervals=max_intervals)


# ---------------------------------------------------------------------------
# Least squares line fit
# ---------------------------------------------------------------------------

class LinFit(NamedTuple):
    slope: float
    intercept: float
    residual: float


def linfit(xs: Sequence[float], ys: Sequence[float]) -> LinFit:
    """Least-squares line fit; residual is the RMS error."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValidationError("linfit needs two equal-length 1-d sequences")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValidationError("linfit inputs must be finite")
    if np.ptp(x) == 0.0:
        raise ValidationError("linfit needs at least two distinct xs")
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    slope = float(np.dot(dx, y - ym) / np.dot(dx, dx))
    intercept = float(ym - slope * xm)
    res = y - (slope * x + intercept)
    return LinFit(slope, intercept, float(np.sqrt(np.mean(res * res))))


# ---------------------------------------------------------------------------
# Log-scaled 2x2 matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LogMatrix2:
    """2x2 complex matrix stored as exp(logscale) * entries.

    entries has max modulus in [1/2, 2]; logscale is finite.
    """

    entries: np.ndarray
    logscale: float = 0.0

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=complex)
        if e.shape != (2, 2):
            raise ValidationError("LogMatrix2 entries must be 2x2")
        object.__setattr__(self, "entries", e)
        if not math.isfinite(self.logscale):
            raise ValidationError("logscale must be finite")

    @staticmethod
    def from_matrix(mat: np.ndarray, logscale: float = 0.0) -> "LogMatrix2":
        mat = np.asarray(mat, dtype=complex)
        if mat.shape != (2, 2):
            raise ValidationError("expected a 2x2 matrix")
        s = float(np.abs(mat).max())
        if s == 0.0:
            raise ValidationError("zero matrix has no log-scale representation")
        if not math.isfinite(s):
            raise ValidationError("matrix entries must be finite")
        return LogMatrix2(entries=mat / s, logscale=logscale + math.log(s))

    @staticmethod
    def identity() -> "LogMatrix2":
        return LogMatrix2(entries=np.eye(2, dtype=complex), logscale=0.0)

    # -- accessors ---------------------------------------------------------

    def to_matrix(self) -> np.ndarray:
        """Dense value; may overflow to inf for large logscale."""
        if self.logscale > 700.0:
            with np.errstate(over="ignore"):
                return self.entries * np.inf
        return self.entries * math.exp(self.logscale)

    def trace_scaled(self) -> tuple[complex, float]:
        """(trace of entries, logscale); value = first * exp(second)."""
        return complex(self.entries[0, 0] + self.entries[1, 1]), self.logscale

    def trace(self) -> complex:
        t, s = self.trace_scaled()
        if s > 700.0:
            return t * np.inf if t != 0 else 0j
        return t * math.exp(s)

    def det(self) -> complex:
        d = self.entries[0, 0] * self.entries[1, 1] - self.entries[0, 1] * self.entries[1, 0]
        s = 2.0 * self.logscale
        if s > 700.0:
            return d * np.inf if d != 0 else 0j
        return d * math.exp(s)

    def norm_log(self) -> float:
        """log of the spectral norm of the represented matrix."""
        a = self.entries
        b = a.conj().T @ a
        t = float(b[0, 0].real + b[1, 1].real)
        d = float(max((b[0, 0] * b[1, 1] - b[0, 1] * b[1, 0]).real, 0.0))
        disc = math.sqrt(max(t * t - 4.0 * d, 0.0))
        smax_sq = 0.5 * (t + disc)
        return self.logscale + 0.5 * math.log(smax_sq)

    def inverse(self) -> "LogMatrix2":
        a = self.entries
        det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        if abs(det) < 1e-300:
            raise ValidationError("matrix is numerically singular")
        adj = np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]], dtype=complex)
        return LogMatrix2.from_matrix(adj / det, logscale=-self.logscale)

    def __matmul__(self, other: "LogMatrix2") -> "LogMatrix2":
        return logmat_mul(self, other)


def logmat_mul(a: LogMatrix2, b: LogMatrix2) -> LogMatrix2:
    """Exact product of two log-scaled matrices, renormalized."""
    return LogMatrix2.from_matrix(a.entries @ b.entries, logscale=a.logscale + b.logscale)


def logmat_pow(a: LogMatrix2, n: int) -> LogMatrix2:
    """a**n for integer n >= 0 by repeated squaring (n = 0 gives identity)."""
    if n < 0:
        raise ValidationError("logmat_pow requires n >= 0")
    result = LogMatrix2.identity()
    base = a
    while n:
        if n & 1:
            result = logmat_mul(result, base)
        n >>= 1
        if n:
            base = logmat_mul(base, base)
    return result
