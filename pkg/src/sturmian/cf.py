"""Continued fractions, Sturmian words, and Gauss-Kuzmin statistics.

An irrational beta in (0,1) is handled purely through its partial
quotients a_1, a_2, ... >= 1; beta itself is never stored as a float.
Convergents p_k/q_k follow

    q_{k+1} = a_{k+1} q_k + q_{k-1},   q_0 = 0, q_{-1} = 1,
    p_{k+1} = a_{k+1} p_k + p_{k-1},   p_0 = 0, p_{-1} = 1,

in exact integer arithmetic (the q seeds match the trace-map level
indexing used everywhere downstream; the p seeds are the standard ones so
that p_k/q_k -> beta).  Sturmian letters floor((n+1) beta) - floor(n beta)
are evaluated exactly against a convergent with q > 4(|n|+1): the
convergent is within 1/q^2 of beta while n p/q is at distance >= 1/q from
the nearest integer, so both floors coincide.

The Gauss-Kuzmin law P(a = r) = log2(1 + 1/(r(r+2))) is the invariant
quotient distribution for Lebesgue-almost-every beta; sampling it i.i.d.
produces the "random number" model used by the almost-sure dimension
bound, with the ergodic constant C = 3 E[ln(a+2)] / ... = 5.04... computed
by series summation.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import CFPrecisionError, ValidationError

LN2 = math.log(2.0)
GK_CUTOFF = 2 ** 32


# ---------------------------------------------------------------------------
# Gauss-Kuzmin law
# ---------------------------------------------------------------------------

def gauss_kuzmin_density(r: int) -> float:
    """P(a = r) = ln(1 + 1/(r(r+2))) / ln 2 for a natural r >= 1."""
    if r < 1:
        raise ValidationError("quotient value must be >= 1")
    return math.log1p(1.0 / (r * (r + 2.0))) / LN2


def _gk_cdf(r) -> float:
    # sum_{i<=r} density(i) telescopes to 1 + log2((r+1)/(r+2))
    return 1.0 + np.log((r + 1.0) / (r + 2.0)) / LN2


def _sample_gk(rng: np.random.Generator, size: int) -> np.ndarray:
    """Inverse-CDF Gauss-Kuzmin samples, cut off at 2**32 and renormalized."""
    u = rng.uniform(size=size) * _gk_cdf(GK_CUTOFF)
    t = np.exp2(u - 1.0)
    r = np.ceil(1.0 / (1.0 - t) - 2.0).astype(np.int64)
    r = np.clip(r, 1, GK_CUTOFF)
    # float inversion can be off by one at cell boundaries
    too_high = (r > 1) & (_gk_cdf(r - 1) >= u)
    r[too_high] -= 1
    too_low = _gk_cdf(r) < u
    r[too_low] += 1
    return np.clip(r, 1, GK_CUTOFF)


def pair_probability(lam: int, gam: int) -> float:
    """Probability of the quotient pair (a_{2k}, a_{2k+1}) = (lam, gam)."""
    if lam < 1 or gam < 1:
        raise ValidationError("pair indices must be >= 1")
    return gauss_kuzmin_density(lam) * gauss_kuzmin_density(gam)


def khintchin_C(tol: float, rmax: int | None = None) -> float:
    """Ergodic constant 3 sum_r ln(r+2) P(a=r) = 5.04...

    Summed until the analytic tail bound drops below tol; passing rmax
    forces a plain partial sum (used by monotonicity checks).
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")

    def partial(upto: int) -> float:
        r = np.arange(1, upto + 1, dtype=float)
        return 3.0 * float(np.sum(np.log(r + 2.0) * np.log1p(1.0 / (r * (r + 2.0))))) / LN2

    if rmax is not None:
        return partial(rmax)
    upto = 1024
    while True:
        # ln(1+x) <= x gives term <= ln(r+2)/r^2; integral comparison gives
        # tail <= (ln(R+2) + 1)/R up to the 3/ln2 prefactor
        tail = 3.0 * (math.log(upto + 2.0) + 1.0) / (upto * LN2)
        if tail <= tol or upto > 2 ** 28:
            return partial(upto)
        upto *= 2


# ---------------------------------------------------------------------------
# Continued fractions
# ---------------------------------------------------------------------------

class ContinuedFraction:
    """Partial quotients of beta in (0,1), explicit or generated.

    Generators: golden (all 1s), silver (all 2s), random(seed) with
    Gauss-Kuzmin i.i.d. quotients.  Explicit finite prefixes reject
    requests beyond their length with the required order attached.
    """

    def __init__(self, quotients: Sequence[int] = (), generator: Callable[[int], list[int]] | None = None,
                 label: str | None = None):
        self._quotients: list[int] = [int(a) for a in quotients]
        for a in self._quotients:
            if a < 1:
                raise ValidationError("partial quotients must be >= 1")
        self._generator = generator
        self.label = label or ",".join(str(a) for a in self._quotients)

    # -- constructors --------------------------------------------------

    @staticmethod
    def from_quotients(quotients: Sequence[int]) -> "ContinuedFraction":
        if len(quotients) == 0:
            raise ValidationError("need at least one partial quotient")
        return ContinuedFraction(quotients)

    @staticmethod
    def golden() -> "ContinuedFraction":
        return ContinuedFraction(generator=lambda n: [1] * n, label="golden")

    @staticmethod
    def silver() -> "ContinuedFraction":
        return ContinuedFraction(generator=lambda n: [2] * n, label="silver")

    @staticmethod
    def random(seed: int) -> "ContinuedFraction":
        rng = np.random.default_rng(seed)

        def draw(n: int) -> list[int]:
            return [int(a) for a in _sample_gk(rng, n)]

        return ContinuedFraction(generator=draw, label=f"random:{seed}")

    @staticmethod
    def parse(spec: str) -> "ContinuedFraction":
        spec = spec.strip()
        if spec == "golden":
            return ContinuedFraction.golden()
        if spec == "silver":
            return ContinuedFraction.silver()
        if spec.startswith("random:"):
            try:
                seed = int(spec.split(":", 1)[1])
            except ValueError:
                raise ValidationError(f"bad random cf spec {spec!r}") from None
            return ContinuedFraction.random(seed)
        try:
            quotients = [int(tok) for tok in spec.split(",") if tok.strip()]
        except ValueError:
            raise ValidationError(f"bad cf spec {spec!r}") from None
        if not quotients:
            raise ValidationError(f"bad cf spec {spec!r}")
        return ContinuedFraction.from_quotients(quotients)

    # -- access ---------------------------------------------------------

    @property
    def prefix_len(self) -> int:
        return len(self._quotients)

    def ensure(self, k: int) -> None:
        """Materialize quotients a_1..a_k or raise CFPrecisionError."""
        if k <= len(self._quotients):
            return
        if self._generator is None:
            raise CFPrecisionError(
                f"cf {self.label!r} holds {len(self._quotients)} quotients, "
                f"but order {k} is required",
                required=k,
            )
        self._quotients.extend(self._generator(k - len(self._quotients)))

    def quotient(self, k: int) -> int:
        """a_k, 1-based."""
        if k < 1:
            raise ValidationError("quotient index is 1-based")
        self.ensure(k)
        return self._quotients[k - 1]

    def quotients(self, k: int) -> list[int]:
        self.ensure(k)
        return self._quotients[:k]

    def is_golden_through(self, k: int) -> bool:
        try:
            return all(a == 1 for a in self.quotients(k))
        except CFPrecisionError:
            return all(a == 1 for a in self._quotients)

    def beta_float(self, order: int = 40) -> float:
        """Float approximation of beta from a high-order convergent."""
        order = min(order, self.prefix_len) if self._generator is None else order
        table = convergents(self, max(order, 2))
        num, den = table.fraction(table.k)
        return num / den


class ConvergentTable:
    """Convergents for indices -1, 0, ..., k (exact integers).

    Three sequences are kept.  `q` follows the level-indexing seeds
    q_0 = 0, q_{-1} = 1 used by the trace-map literature; with those seeds
    the recursion actually reproduces the standard numerators, so p and q
    coincide and the true denominators are stored separately as `den`
    (seeds den_0 = 1, den_{-1} = 0).  The genuine convergent fraction is
    p_k / den_k; for the golden mean den_k = q_{k+1}.
    """

    def __init__(self, p: list[int], q: list[int], den: list[int]):
        self._p = p  # index i stored at slot i+1
        self._q = q
        self._den = den

    @property
    def k(self) -> int:
        return len(self._q) - 2

    def p(self, i: int) -> int:
        return self._p[i + 1]

    def q(self, i: int) -> int:
        return self._q[i + 1]

    def den(self, i: int) -> int:
        return self._den[i + 1]

    def q_list(self) -> list[int]:
        """q_0 .. q_k."""
        return self._q[1:]

    def p_list(self) -> list[int]:
        return self._p[1:]

    def den_list(self) -> list[int]:
        return self._den[1:]

    def fraction(self, i: int) -> tuple[int, int]:
        """(numerator, denominator) of the i-th convergent of beta."""
        return self._p[i + 1], self._den[i + 1]


def convergents(cf: ContinuedFraction, k: int) -> ConvergentTable:
    """Convergent table through index k (>= 0)."""
    if k < 0:
        raise ValidationError("k must be >= 0")
    cf.ensure(k)
    p = [1, 0]    # p_{-1}, p_0
    q = [1, 0]    # q_{-1}, q_0  (level-indexing seeds)
    den = [0, 1]  # den_{-1}, den_0 (standard denominator seeds)
    for j in range(1, k + 1):
        a = cf.quotient(j)
        p.append(a * p[-1] + p[-2])
        q.append(a * q[-1] + q[-2])
        den.append(a * den[-1] + den[-2])
    return ConvergentTable(p, q, den)


def _convergent_exceeding(cf: ContinuedFraction, bound: int, context: str) -> tuple[int, int]:
    """Smallest convergent (p, den) with den > bound, exact integers."""
    p_prev, p = 1, 0
    d_prev, d = 0, 1
    j = 0
    while d <= bound:
        j += 1
        try:
            a = cf.quotient(j)
        except CFPrecisionError as exc:
            raise CFPrecisionError(
                f"{context} needs a convergent with denominator > {bound}; "
                f"cf {cf.label!r} is exhausted at order {cf.prefix_len} "
                f"(denominator reached {d})",
                required=j,
            ) from exc
        p_prev, p = p, a * p + p_prev
        d_prev, d = d, a * d + d_prev
    return p, d


def sturmian_letter(cf: ContinuedFraction, n: int) -> int:
    """Exact Sturmian letter floor((n+1) beta) - floor(n beta) in {0, 1}."""
    if abs(n) > 10 ** 9:
        raise ValidationError("site index too large (|n| <= 1e9)")
    pk, qk = _convergent_exceeding(cf, 4 * (abs(n) + 2), f"letter at n={n}")
    # floor(m beta) == floor(m p/q) whenever q > 4(|m|+1): see module doc
    return (n + 1) * pk // qk - (n * pk) // qk


def sturmian_word(cf: ContinuedFraction, n_from: int, n_to: int) -> np.ndarray:
    """Letters for sites n_from..n_to inclusive."""
    if n_to < n_from:
        raise ValidationError("empty site range")
    bound = 4 * (max(abs(n_from), abs(n_to)) + 2)
    pk, qk = _convergent_exceeding(cf, bound, f"letters on [{n_from}, {n_to}]")
    ns = range(n_from, n_to + 2)
    floors = np.array([(m * pk) // qk for m in ns], dtype=np.int64)
    return (floors[1:] - floors[:-1]).astype(np.int8)


def sample_quotients(seed: int, k: int) -> ContinuedFraction:
    """Reproducible random cf with k quotients materialized."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    cf = ContinuedFraction.random(seed)
    cf.ensure(k)
    return cf


def birkhoff_average(cf: ContinuedFraction, f: Callable[[int], float], k: int) -> float:
    """(1/k) sum_{j<=k} f(a_j)."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    total = 0.0
    for a in cf.quotients(k):
        v = float(f(a))
        if not math.isfinite(v):
            raise ValidationError(f"f({a}) is not finite")
        total += v
    return total / k
