"""Band structure of periodic approximants and fractal-dimension bounds.

Level-k approximant sets are sublevel sets {E : |trace| <= 2} of trace
polynomials; their connected components ("bands") refine across levels
following strict combinatorics once the coupling is large enough:

* off-diagonal golden mean, coupling c > 4: every band is type A
  (contained in a band one level up) or type B (two levels up); an A band
  contains exactly one B band two levels down and nothing else, a B band
  contains one A band one level down flanked by two B bands two levels
  down.

* diagonal model, lambda1 > 20: the type I/II/III taxonomy.  At level k,
  type I objects are bands of {|z_k| <= 2}, types II and III are bands of
  {|x_k| <= 2}; a type I band contains one type II band at the next
  level, a type II band contains (a+1) type I bands alternating with a
  type III bands (a = next quotient), a type III band a of type I and
  a-1 of type III.

Enumeration refines recursively inside permitted parents only; a child
count differing from the prediction raises instead of being patched.
Band lengths obey 4 L_tau(Q) <= |B| <= 4 L_tau(P) where tau is the band's
type word and P_n, Q_n are 3x3 transition-factor tables built from
c1 = 3/(lambda1-8) and c2 = 1/(lambda1+5).

Dimension estimates count, per level, bands no shorter than the scale
eps_k = 4 prod_j (lambda1+5)^{-1} (a_j+2)^{-3} and regress ln(count)
against -ln(eps_k); the asymptotic lower bounds are
ln(phi) / (C_k + ln(lambda1+5)) for quotient statistics C_k and, for
Gauss-Kuzmin random quotients, (D - nu)/(C + ln(lambda1+5)) with D the
two-step growth series and C the Khintchin-type constant.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from . import cf as cfmod
from .cf import ContinuedFraction, khintchin_C
from .errors import EnumerationError, ThresholdError, ValidationError
from .numerics import LinFit, linfit, logmat_mul, logmat_pow
from .tracemap import (
    PHI,
    ModelParams,
    trace_arrays,
    trace_orbit,
    transfer_matrix,
)

LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# Bands and covers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Band:
    lo: float
    hi: float
    level: int
    label: str = ""
    tau: tuple = ()

    def __post_init__(self):
        if not (self.lo < self.hi):
            raise ValidationError("band needs lo < hi")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def tau_str(self) -> str:
        return "-".join(self.tau)


@dataclass
class SpectrumCover:
    level: int
    bands: list

    def __post_init__(self):
        for a, b in zip(self.bands, self.bands[1:]):
            if a.hi > b.lo + 1e-15 * (1.0 + abs(b.lo)):
                raise ValidationError("cover bands must be sorted and disjoint")

    @property
    def total_measure(self) -> float:
        return float(sum(b.length for b in self.bands))

    def __len__(self) -> int:
        return len(self.bands)


# ---------------------------------------------------------------------------
# Approximant traces
# ---------------------------------------------------------------------------

def approximant_trace(
    p: ModelParams,
    cf: ContinuedFraction,
    E: complex,
    n: int,
    m: int,
    debug: bool = False,
) -> complex:
    """h_{n,m}(E) = Tr(M_{n-1} M_n^m) for m in {-1, 0, 1}.

    Evaluated through the trace orbit (Cayley-Hamilton reduction); with
    debug=True the explicit log-scaled matrix product is computed too and
    must agree to 1e-8 relative.
    """
    if m not in (-1, 0, 1):
        raise ValidationError("only m in {-1, 0, 1} is supported")
    if n < 1:
        raise ValidationError("n must be >= 1")
    orbit = trace_orbit(p, cf, E, n, delta=0.0)
    if orbit.kmax < n:
        raise ValidationError(
            f"trace orbit overflowed at k={orbit.kmax} before reaching n={n}"
        )
    if m == 1:
        value = orbit.z(n)
    elif m == 0:
        value = orbit.x(n - 1)
    else:
        value = orbit.x(n) * orbit.x(n - 1) - orbit.z(n)
    if debug:
        m_prev = transfer_matrix(p, cf, E, n - 1)
        m_cur = transfer_matrix(p, cf, E, n)
        if m == -1:
            prod = logmat_mul(m_prev, m_cur.inverse())
        else:
            prod = logmat_mul(m_prev, logmat_pow(m_cur, m))
        direct = prod.trace()
        if abs(direct - value) > 1e-8 * max(1.0, abs(value)):
            raise EnumerationError(
                f"trace routes disagree at (n={n}, m={m}): {direct} vs {value}"
            )
    return value


# ---------------------------------------------------------------------------
# Root/band location primitives
# ---------------------------------------------------------------------------

def _bisect_many(g: Callable[[np.ndarray], np.ndarray],
                 neg: np.ndarray, pos: np.ndarray, tol: float) -> np.ndarray:
    """Vectorized bisection: g < 0 at neg, g > 0 at pos; returns crossings."""
    neg = neg.astype(float).copy()
    pos = pos.astype(float).copy()
    for _ in range(200):
        mid = 0.5 * (neg + pos)
        done = np.abs(pos - neg) <= tol + 4e-16 * np.abs(mid)
        if done.all():
            break
        v = g(mid)
        take_pos = v > 0
        pos = np.where(take_pos & ~done, mid, pos)
        neg = np.where(~take_pos & ~done, mid, neg)
    return 0.5 * (neg + pos)


class _BandLocator:
    """Finds the maximal |f| <= 2 subintervals of a window.

    f must be a vectorized real-valued trace function whose bands each
    contain exactly one zero of f (true for the discriminant-like traces
    used here).
    """

    def __init__(self, f: Callable[[np.ndarray], np.ndarray], tol: float):
        self.f = f
        self.tol = tol

    def _values(self, E: np.ndarray) -> np.ndarray:
        v = self.f(E)
        v = np.where(np.isnan(v), np.inf, v)
        return np.where(v == 0.0, 1e-300, v)

    def find(self, lo: float, hi: float, expected: Optional[int], context: str,
             base_pts: int = 513, max_refine: int = 6) -> list[tuple[float, float]]:
        if not lo < hi:
            raise EnumerationError(f"{context}: empty search window")
        if expected == 0:
            zeros = self._count_stable(lo, hi, base_pts)
            if zeros != 0:
                raise EnumerationError(
                    f"{context}: expected no bands, found {zeros} trace zeros"
                )
            return []
        E = None
        for attempt in range(max_refine):
            n = base_pts * 2 ** attempt + 1
            E = np.linspace(lo, hi, n)
            v = self._values(E)
            sign_flip = np.flatnonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)
            if expected is None:
                # stability: same count at double resolution
                if attempt > 0 and sign_flip.size == self._last_count:
                    break
                self._last_count = sign_flip.size
            else:
                if sign_flip.size == expected:
                    break
                if sign_flip.size > expected:
                    raise EnumerationError(
                        f"{context}: found {sign_flip.size} trace zeros, "
                        f"expected {expected}"
                    )
        else:
            if expected is not None:
                raise EnumerationError(
                    f"{context}: found {sign_flip.size} trace zeros after "
                    f"refinement, expected {expected}"
                )
        if sign_flip.size == 0:
            return []
        roots = _bisect_many(self._values, E[sign_flip], E[sign_flip + 1], 0.0)
        return self._edges(E, v, roots, lo, hi, context)

    def _count_stable(self, lo: float, hi: float, base_pts: int) -> int:
        counts = []
        for attempt in range(2):
            n = base_pts * 2 ** attempt + 1
            v = self._values(np.linspace(lo, hi, n))
            counts.append(int(np.sum(np.sign(v[:-1]) * np.sign(v[1:]) < 0)))
        return max(counts)

    def _edges(self, E, v, roots, lo, hi, context) -> list[tuple[float, float]]:
        absv = np.abs(v)
        g = lambda x: np.abs(self._values(x)) - 2.0
        edge_lo = np.empty_like(roots)
        edge_hi = np.empty_like(roots)
        pos_lo = np.empty_like(roots)
        pos_hi = np.empty_like(roots)
        has_lo = np.ones(roots.size, dtype=bool)
        has_hi = np.ones(roots.size, dtype=bool)
        bounds = np.concatenate(([lo], 0.5 * (roots[1:] + roots[:-1]), [hi]))
        for j, r in enumerate(roots):
            seg = (E >= bounds[j]) & (E <= r)
            anchors = np.flatnonzero(seg & (absv > 2.0))
            if anchors.size:
                pos_lo[j] = E[anchors[-1]]
            elif absv[np.argmin(np.abs(E - bounds[j]))] <= 2.0 + 1e-7 and j == 0:
                has_lo[j] = False
                edge_lo[j] = lo
            else:
                # refine near the gap between bands
                fine = np.linspace(bounds[j], r, 4097)
                fa = np.abs(self._values(fine))
                anchors = np.flatnonzero(fa > 2.0)
                if anchors.size:
                    pos_lo[j] = fine[anchors[-1]]
                elif j == 0:
                    has_lo[j] = False
                    edge_lo[j] = lo
                else:
                    raise EnumerationError(
                        f"{context}: could not separate bands near E={r}"
                    )
            seg = (E >= r) & (E <= bounds[j + 1])
            anchors = np.flatnonzero(seg & (absv > 2.0))
            if anchors.size:
                pos_hi[j] = E[anchors[0]]
            else:
                fine = np.linspace(r, bounds[j + 1], 4097)
                fa = np.abs(self._values(fine))
                anchors = np.flatnonzero(fa > 2.0)
                if anchors.size:
                    pos_hi[j] = fine[anchors[0]]
                elif j == roots.size - 1:
                    has_hi[j] = False
                    edge_hi[j] = hi
                else:
                    raise EnumerationError(
                        f"{context}: could not separate bands near E={r}"
                    )
        if has_lo.any():
            sel = np.flatnonzero(has_lo)
            found = _bisect_many(lambda x: -g(x), pos_lo[sel], roots[sel], self.tol)
            edge_lo[sel] = found
        if has_hi.any():
            sel = np.flatnonzero(has_hi)
            found = _bisect_many(lambda x: -g(x), pos_hi[sel], roots[sel], self.tol)
            edge_hi[sel] = found
        bands = []
        for j in range(roots.size):
            a, b = float(edge_lo[j]), float(edge_hi[j])
            if not a < b:
                raise EnumerationError(f"{context}: degenerate band at E={roots[j]}")
            bands.append((a, b))
        for (a1, b1), (a2, b2) in zip(bands, bands[1:]):
            if b1 > a2:
                raise EnumerationError(f"{context}: overlapping bands near E={b1}")
        return bands


def _contains(outer_lo: float, outer_hi: float, lo: float, hi: float, slack: float) -> bool:
    return outer_lo - slack <= lo and hi <= outer_hi + slack


# ---------------------------------------------------------------------------
# Off-diagonal golden-mean refinement (types A and B)
# ---------------------------------------------------------------------------

class FibonacciBandTree:
    """A/B band refinement for the off-diagonal golden-mean model, c > 4."""

    def __init__(self, params: ModelParams, cf: ContinuedFraction,
                 max_level: int, tol: float = 1e-13):
        if params.kind != "offdiagonal":
            raise ThresholdError("A/B refinement applies to the off-diagonal model")
        if params.coupling <= 4.0:
            raise ThresholdError(
                f"A/B refinement needs coupling > 4, got {params.coupling:.3f}"
            )
        if not cf.is_golden_through(max_level + 2):
            raise ThresholdError("A/B refinement applies to the golden mean")
        if max_level < 3:
            raise ValidationError("max_level must be >= 3")
        self.params = params
        self.cf = cf
        self.max_level = max_level
        self.tol = tol
        self.levels: list[list[Band]] = []
        self.children: dict[tuple[int, int], list[tuple[int, int]]] = {}
        self._build()

    # trace evaluation ----------------------------------------------------

    def _x(self, k: int) -> Callable[[np.ndarray], np.ndarray]:
        def f(E: np.ndarray) -> np.ndarray:
            xs, _ = trace_arrays(self.params, self.cf, E, max(k, 1))
            return xs[k + 1]
        return f

    # construction ---------------------------------------------------------

    def _seed_levels(self):
        K = self.params.spectral_window
        counts = [1, 1, 2, 3]
        for k in range(4):
            loc = _BandLocator(self._x(k), self.tol)
            spans = loc.find(-K, K, counts[k], f"seed level {k}")
            self.levels.append(
                [Band(lo, hi, k, "") for lo, hi in spans]
            )
        # classify levels 2 and 3: A nests one level up, B two levels up
        for k in (2, 3):
            relabeled = []
            for band in self.levels[k]:
                slack = 1e-9 * (1.0 + abs(band.lo))
                in_prev = any(
                    _contains(pb.lo, pb.hi, band.lo, band.hi, slack)
                    for pb in self.levels[k - 1]
                )
                in_prev2 = any(
                    _contains(pb.lo, pb.hi, band.lo, band.hi, slack)
                    for pb in self.levels[k - 2]
                )
                if in_prev and not in_prev2:
                    label = "A"
                elif in_prev2 and not in_prev:
                    label = "B"
                else:
                    raise EnumerationError(
                        f"seed band [{band.lo}, {band.hi}] at level {k} has "
                        f"ambiguous type (A: {in_prev}, B: {in_prev2})"
                    )
                relabeled.append(Band(band.lo, band.hi, k, label))
            self.levels[k] = relabeled

    def _build(self):
        self._seed_levels()
        for n in range(4, self.max_level + 1):
            self._build_level(n)

    def _a_child_of(self, level: int, idx: int) -> Band:
        for (lk, li) in self.children.get((level, idx), []):
            cand = self.levels[lk][li]
            if cand.label == "A":
                return cand
        raise EnumerationError(
            f"type B parent #{idx} at level {level} has no recorded type A child"
        )

    def _build_level(self, n: int):
        loc = _BandLocator(self._x(n), self.tol)
        new: list[tuple[Band, tuple[int, int]]] = []
        # type A children: one per type B band at level n-1
        for i, parent in enumerate(self.levels[n - 1]):
            if parent.label != "B":
                continue
            spans = loc.find(
                parent.lo, parent.hi, 1,
                f"A-child search in B band #{i} [{parent.lo}, {parent.hi}] "
                f"at level {n - 1}",
            )
            new.append((Band(*spans[0], level=n, label="A"), (n - 1, i)))
        # type B children: one per type A band, two per type B band, level n-2
        for i, parent in enumerate(self.levels[n - 2]):
            if parent.label == "A":
                spans = loc.find(
                    parent.lo, parent.hi, 1,
                    f"B-child search in A band #{i} at level {n - 2}",
                )
                new.append((Band(*spans[0], level=n, label="B"), (n - 2, i)))
            elif parent.label == "B":
                a_child = self._a_child_of(n - 2, i)
                spans = loc.find(
                    parent.lo, parent.hi, 2,
                    f"B-child search in B band #{i} at level {n - 2}",
                )
                left, right = spans
                if not (left[1] <= a_child.lo and a_child.hi <= right[0]):
                    raise EnumerationError(
                        f"B children of B band #{i} at level {n - 2} do not "
                        f"flank its A child"
                    )
                new.append((Band(*left, level=n, label="B"), (n - 2, i)))
                new.append((Band(*right, level=n, label="B"), (n - 2, i)))
        new.sort(key=lambda item: item[0].lo)
        bands = []
        for j, (band, parent_key) in enumerate(new):
            self.children.setdefault(parent_key, []).append((n, j))
            bands.append(band)
        for b1, b2 in zip(bands, bands[1:]):
            if b1.hi > b2.lo:
                raise EnumerationError(f"overlapping bands at level {n} near {b1.hi}")
        self.levels.append(bands)

    # queries ---------------------------------------------------------------

    def cover(self, k: int) -> SpectrumCover:
        if k < 0 or k > self.max_level:
            raise ValidationError(f"enumerated levels are 0..{self.max_level}")
        return SpectrumCover(level=k, bands=list(self.levels[k]))

    def children_of(self, level: int, idx: int) -> list[Band]:
        return [self.levels[lk][li] for lk, li in self.children.get((level, idx), [])]


# ---------------------------------------------------------------------------
# Diagonal model refinement (types I, II, III)
# ---------------------------------------------------------------------------

class RaymondBandTree:
    """I/II/III refinement for the diagonal model, lambda1 > 20.

    Level-k nodes: type I bands of {|z_k| <= 2}, types II/III bands of
    {|x_k| <= 2}; cover(k) returns the II/III bands (the level-k
    approximant set), i_bands(k) the type I bands.
    """

    def __init__(self, params: ModelParams, cf: ContinuedFraction,
                 max_level: int, tol: float = 1e-13):
        if params.kind != "diagonal":
            raise ThresholdError("I/II/III refinement applies to the diagonal model")
        if params.lambda1 <= 20.0:
            raise ThresholdError(
                f"I/II/III refinement needs lambda1 > 20, got {params.lambda1}"
            )
        if max_level < 1:
            raise ValidationError("max_level must be >= 1")
        cf.ensure(max_level + 1)
        self.params = params
        self.cf = cf
        self.max_level = max_level
        self.tol = tol
        self.levels: list[list[Band]] = []
        self.children: dict[tuple[int, int], list[tuple[int, int]]] = {}
        self._build()

    def _trace_fn(self, which: str, k: int) -> Callable[[np.ndarray], np.ndarray]:
        def f(E: np.ndarray) -> np.ndarray:
            xs, zs = trace_arrays(self.params, self.cf, E, max(k, 1))
            return xs[k + 1] if which == "x" else zs[k]
        return f

    def _seed_level(self):
        K = self.params.spectral_window
        loc_i = _BandLocator(self._trace_fn("z", 0), self.tol)
        loc_x = _BandLocator(self._trace_fn("x", 0), self.tol)
        i_spans = loc_i.find(-K, K, 1, "level 0 type I seed")
        x_spans = loc_x.find(-K, K, 1, "level 0 type III seed")
        bands = [
            Band(*i_spans[0], level=0, label="I", tau=("I",)),
            Band(*x_spans[0], level=0, label="III", tau=("III",)),
        ]
        bands.sort(key=lambda b: b.lo)
        self.levels.append(bands)

    def _build(self):
        self._seed_level()
        for k in range(1, self.max_level + 1):
            self._build_level(k)

    def _build_level(self, k: int):
        a = self.cf.quotient(k)
        loc_i = _BandLocator(self._trace_fn("z", k), self.tol)
        loc_x = _BandLocator(self._trace_fn("x", k), self.tol)
        new: list[tuple[Band, tuple[int, int]]] = []
        for i, parent in enumerate(self.levels[k - 1]):
            ctx = (
                f"level {k - 1} type {parent.label} band #{i} "
                f"[{parent.lo!r}, {parent.hi!r}]"
            )
            if parent.label == "I":
                spans = loc_x.find(parent.lo, parent.hi, 1, f"{ctx}: II-child search")
                new.append(
                    (Band(*spans[0], level=k, label="II", tau=parent.tau + ("II",)),
                     (k - 1, i))
                )
                continue
            n_i = a + 1 if parent.label == "II" else a
            n_iii = a if parent.label == "II" else a - 1
            i_spans = loc_i.find(parent.lo, parent.hi, n_i, f"{ctx}: I-child search")
            iii_spans = loc_x.find(parent.lo, parent.hi, n_iii, f"{ctx}: III-child search")
            kids = [(s, "I") for s in i_spans] + [(s, "III") for s in iii_spans]
            kids.sort(key=lambda item: item[0][0])
            pattern = [lab for _, lab in kids]
            want = ["I" if j % 2 == 0 else "III" for j in range(len(kids))]
            if pattern != want:
                raise EnumerationError(
                    f"{ctx}: children do not alternate I/III (got {pattern})"
                )
            for span, lab in kids:
                new.append(
                    (Band(*span, level=k, label=lab, tau=parent.tau + (lab,)),
                     (k - 1, i))
                )
        new.sort(key=lambda item: item[0].lo)
        bands = []
        for j, (band, parent_key) in enumerate(new):
            self.children.setdefault(parent_key, []).append((k, j))
            bands.append(band)
        self.levels.append(bands)

    # queries ---------------------------------------------------------------

    def nodes(self, k: int) -> list[Band]:
        if k < 0 or k > self.max_level:
            raise ValidationError(f"enumerated levels are 0..{self.max_level}")
        return list(self.levels[k])

    def cover(self, k: int) -> SpectrumCover:
        bands = [b for b in self.nodes(k) if b.label in ("II", "III")]
        return SpectrumCover(level=k, bands=bands)

    def i_bands(self, k: int) -> list[Band]:
        return [b for b in self.nodes(k) if b.label == "I"]

    def children_of(self, level: int, idx: int) -> list[Band]:
        return [self.levels[lk][li] for lk, li in self.children.get((level, idx), [])]


# ---------------------------------------------------------------------------
# Unlabelled grid-scan fallback and oracle
# ---------------------------------------------------------------------------

def grid_scan_bands(
    p: ModelParams,
    cf: ContinuedFraction,
    k: int,
    tol: float = 1e-12,
    base_pts: int = 65537,
) -> SpectrumCover:
    """Bands of {|x_k| <= 2} from a plain sign-change scan over [-K, K].

    Independent of the taxonomy; used as an oracle at small k and as the
    labelled enumeration's fallback below the coupling thresholds.
    """

    def f(E: np.ndarray) -> np.ndarray:
        xs, _ = trace_arrays(p, cf, E, max(k, 1))
        return xs[k + 1]

    K = p.spectral_window
    loc = _BandLocator(f, tol)
    spans = loc.find(-K, K, None, f"grid scan level {k}", base_pts=base_pts,
                     max_refine=4)
    return SpectrumCover(level=k, bands=[Band(lo, hi, k, "") for lo, hi in spans])


def enumerate_bands(
    p: ModelParams, cf: ContinuedFraction, k: int, tol: float = 1e-12
) -> SpectrumCover:
    """Level-k band cover with labels when the taxonomy applies.

    Off-diagonal golden mean with c > 4 uses the A/B tree; the diagonal
    model with lambda1 > 20 uses the I/II/III tree (II and III bands form
    the cover).  Below the thresholds a label-less grid scan is returned
    and a warning is emitted.
    """
    if k < 2:
        raise ValidationError("enumerate_bands needs k >= 2")
    if p.kind == "offdiagonal" and p.coupling > 4.0 and cf.is_golden_through(k + 2):
        tree = FibonacciBandTree(p, cf, max(k, 3), tol=tol)
        return tree.cover(k)
    if p.kind == "diagonal" and p.lambda1 > 20.0:
        tree = RaymondBandTree(p, cf, k, tol=tol)
        return tree.cover(k)
    warnings.warn(
        "coupling below the taxonomy threshold; falling back to an "
        "unlabelled grid scan",
        stacklevel=2,
    )
    return grid_scan_bands(p, cf, k, tol=tol)


# ---------------------------------------------------------------------------
# Counting recursion (Lemma-8-style, length >= eps_k bands)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BandCounts:
    nI: int
    nII: int
    nIII: int
    level: int

    @property
    def n(self) -> int:
        """n_k = n_{k,II} + n_{k,III}."""
        return self.nII + self.nIII


def band_counts_sequence(cf: ContinuedFraction, k: int) -> list[BandCounts]:
    """Exact integer counting recursion through level k.

    n_{k+1,I} = (a+1) n_{k,II} + a n_{k,III};
    n_{k+1,II} = [a <= 2] n_{k,I};
    n_{k+1,III} = a n_{k,II} + (a-1) n_{k,III}, with a = a_{k+1} and
    seeds (1, 0, 1).  These count bands of guaranteed length >= eps_k,
    hence the indicator on II production.
    """
    if k < 0:
        raise ValidationError("k must be >= 0")
    cf.ensure(k)
    seq = [BandCounts(1, 0, 1, 0)]
    for j in range(1, k + 1):
        a = cf.quotient(j)
        prev = seq[-1]
        seq.append(
            BandCounts(
                nI=(a + 1) * prev.nII + a * prev.nIII,
                nII=prev.nI if a <= 2 else 0,
                nIII=a * prev.nII + (a - 1) * prev.nIII,
                level=j,
            )
        )
    return seq


def band_counts(cf: ContinuedFraction, k: int) -> BandCounts:
    return band_counts_sequence(cf, k)[-1]


def two_step_factor(a_even: int, a_odd: int) -> int:
    """Two-level growth factor c_{2k}(a_{2k}, a_{2k-1}) of the band count."""
    if a_even < 1 or a_odd < 1:
        raise ValidationError("quotients must be >= 1")
    if a_odd == 1:
        return {1: 2, 2: 3}.get(a_even, a_even - 1)
    if a_odd == 2:
        return {1: 3, 2: 5}.get(a_even, 2 * (a_even - 1))
    if a_even == 1:
        return a_odd
    if a_even == 2:
        return 2 * a_odd - 1
    return (a_even - 1) * (a_odd - 1)


def epsilon_scale(cf: ContinuedFraction, k: int, lambda1: float) -> float:
    """Counting scale eps_k = 4 prod_{j<=k} (lambda1+5)^{-1} (a_j+2)^{-3}."""
    if lambda1 <= 20.0:
        raise ThresholdError("epsilon scale is defined for lambda1 > 20")
    if k < 0:
        raise ValidationError("k must be >= 0")
    log_eps = math.log(4.0)
    for j in range(1, k + 1):
        log_eps -= math.log(lambda1 + 5.0) + 3.0 * math.log(cf.quotient(j) + 2.0)
    return math.exp(log_eps)


# ---------------------------------------------------------------------------
# Band-length bounds (transition-factor products)
# ---------------------------------------------------------------------------

_ALLOWED_TRANSITIONS = {("I", "II"), ("II", "I"), ("II", "III"),
                        ("III", "I"), ("III", "III")}


def _transition_factor(frm: str, to: str, a: int, c: float) -> float:
    if (frm, to) not in _ALLOWED_TRANSITIONS:
        raise ValidationError(f"transition {frm}->{to} is not permitted")
    if frm == "I":  # necessarily to == "II"
        return c ** (a - 1)
    return c / a


def _transition_factor_lower(frm: str, to: str, a: int, c: float) -> float:
    if (frm, to) not in _ALLOWED_TRANSITIONS:
        raise ValidationError(f"transition {frm}->{to} is not permitted")
    if frm == "I":
        return c ** (a - 1)
    return c / (a + 2.0) ** 3


def band_length_bounds(
    tau: Sequence[str], cf: ContinuedFraction, lambda1: float
) -> tuple[float, float]:
    """(4 L_tau(Q), 4 L_tau(P)): guaranteed bracket on a band's length."""
    if lambda1 <= 20.0:
        raise ThresholdError("band-length bounds hold for lambda1 > 20")
    tau = tuple(tau)
    if len(tau) < 1 or any(t not in ("I", "II", "III") for t in tau):
        raise ValidationError(f"bad index word {tau!r}")
    c1 = 3.0 / (lambda1 - 8.0)
    c2 = 1.0 / (lambda1 + 5.0)
    lower = upper = 4.0
    for j in range(1, len(tau)):
        a = cf.quotient(j)
        upper *= _transition_factor(tau[j - 1], tau[j], a, c1)
        lower *= _transition_factor_lower(tau[j - 1], tau[j], a, c2)
    if lower > upper:
        raise EnumerationError(f"inverted length bounds for tau={tau}")
    return lower, upper


# ---------------------------------------------------------------------------
# Dimension bounds and the growth series
# ---------------------------------------------------------------------------

def dim_lower_bound(cf: ContinuedFraction, lambda1: float, k: int) -> float:
    """ln(phi) / (C_k + ln(lambda1+5)) with C_k = (3/k) sum ln(a_j+2)."""
    if lambda1 <= 20.0:
        raise ThresholdError("dimension bound holds for lambda1 > 20")
    if k < 1:
        raise ValidationError("k must be >= 1")
    c_k = 3.0 * sum(math.log(a + 2.0) for a in cf.quotients(k)) / k
    return math.log(PHI) / (c_k + math.log(lambda1 + 5.0))


class DSeries(NamedTuple):
    value: float
    tail_bound: float

    def __float__(self) -> float:
        return self.value


def compute_D(terms: int) -> DSeries:
    """Two-step growth series D = E[ln c_{2k}] / 2 over Gauss-Kuzmin pairs.

    Evaluated from the three scalar terms, the two single sums, and the
    telescoped double sum, truncating the quotient sums at `terms` with a
    positive-term integral tail bound reported alongside.
    """
    if terms < 3:
        raise ValidationError("terms must be >= 3")
    l1 = math.log(4.0 / 3.0)
    l2 = math.log(9.0 / 8.0)
    lam = np.arange(3, terms + 1, dtype=float)
    weight = np.log1p(1.0 / (lam * (lam + 2.0)))
    s_one = float(np.sum((np.log(lam) + np.log(lam - 1.0)) * weight))
    s_two = float(np.sum((np.log(2 * lam - 1.0) + np.log(2 * lam - 2.0)) * weight))
    s_dbl = float(np.sum(np.log(lam - 1.0) * weight))
    bracket = (
        math.log(2.0) * l1 * l1
        + 2.0 * math.log(3.0) * l2 * l1
        + math.log(5.0) * l2 * l2
        + l1 * s_one
        + l2 * s_two
        + 2.0 * l1 * s_dbl
    )
    value = bracket / (2.0 * LN2 * LN2)
    # each truncated sum has terms <= 2 ln(2x) / x^2; integral tail bound
    n = float(terms)
    per_sum_tail = 2.0 * (math.log(2.0 * n) + 1.0) / n
    tail = (l1 + l2 + 2.0 * l1) * per_sum_tail / (2.0 * LN2 * LN2)
    return DSeries(value=value, tail_bound=tail)


def dim_lower_bound_as(lambda1: float, nu: float, terms: int = 10 ** 5,
                       tol: float = 1e-4) -> float:
    """(D - nu) / (C + ln(lambda1+5)): almost-sure dimension bound."""
    if lambda1 <= 20.0:
        raise ThresholdError("dimension bound holds for lambda1 > 20")
    d = compute_D(terms).value
    if not 0 < nu < d:
        raise ValidationError(f"nu must lie in (0, {d:.4f})")
    return (d - nu) / (khintchin_C(tol) + math.log(lambda1 + 5.0))


def xi_c(c: float) -> float:
    """xi_c = c - 2 + sqrt(c^2 - 4c + 1), the band derivative growth rate."""
    disc = c * c - 4.0 * c + 1.0
    if disc < 0:
        raise ValidationError("xi_c needs c^2 - 4c + 1 >= 0 (c >= 2 + sqrt 3)")
    return c - 2.0 + math.sqrt(disc)


def alpha_upper_bound(p: ModelParams) -> float:
    """Transport exponent bound 2 ln(phi) / ln(xi_c), valid for c > 8."""
    c = p.coupling
    if c <= 8.0:
        raise ThresholdError(f"the transport bound requires c > 8, got {c:.3f}")
    return 2.0 * math.log(PHI) / math.log(xi_c(c))


# ---------------------------------------------------------------------------
# Box-counting estimates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoxCountEstimate:
    dim_minus: float
    dim_plus: float
    band_dim: float
    band_residual: float
    box_dim: float
    counts: tuple
    box_counts: tuple
    scales: tuple


def _dyadic_box_count(bands: Sequence[Band], eps: float) -> int:
    """Number of eps-grid boxes meeting the union of the bands."""
    total = 0
    last_box = None
    for b in bands:
        i_lo = math.floor(b.lo / eps)
        i_hi = math.floor(b.hi / eps)
        total += i_hi - i_lo + 1
        if last_box is not None and i_lo == last_box:
            total -= 1
        last_box = i_hi
    return total


def box_counting_estimate(
    covers: Sequence[SpectrumCover],
    epsilons: Optional[Sequence[float]] = None,
) -> BoxCountEstimate:
    """Dimension estimates from a list of covers at increasing levels.

    band_dim regresses ln(number of bands of length >= eps_k) on
    -ln eps_k (the counting-scale estimator behind the deterministic
    lower bound); box_dim does the same with a plain eps_k-grid box
    count.  dim_minus / dim_plus are the extreme local slopes of the
    band-count route.  Default eps_k is the minimal band length per
    level.
    """
    if len(covers) < 3:
        raise ValidationError("need at least 3 cover levels")
    if epsilons is None:
        epsilons = [min(b.length for b in c.bands) for c in covers]
    epsilons = [float(e) for e in epsilons]
    if len(epsilons) != len(covers):
        raise ValidationError("one scale per cover level required")
    counts, box_counts, log_eps = [], [], []
    for cover, eps in zip(covers, epsilons):
        if eps <= 0:
            raise ValidationError("scales must be positive")
        counts.append(sum(1 for b in cover.bands if b.length >= eps))
        box_counts.append(_dyadic_box_count(cover.bands, eps))
        log_eps.append(-math.log(eps))
    if any(c == 0 for c in counts):
        raise ValidationError("a cover level has no band at its scale")
    if len(set(log_eps)) < 3:
        raise ValidationError("need at least 3 distinct scales")
    fit_band = linfit(log_eps, [math.log(c) for c in counts])
    fit_box = linfit(log_eps, [math.log(c) for c in box_counts])
    local = [
        (math.log(c2) - math.log(c1)) / (e2 - e1)
        for (c1, c2, e1, e2) in zip(counts[:-1], counts[1:], log_eps[:-1], log_eps[1:])
        if e2 != e1
    ]
    return BoxCountEstimate(
        dim_minus=min(local),
        dim_plus=max(local),
        band_dim=fit_band.slope,
        band_residual=fit_band.residual,
        box_dim=fit_box.slope,
        counts=tuple(counts),
        box_counts=tuple(box_counts),
        scales=tuple(epsilons),
    )
