"""Wavepacket dynamics on finite boxes of Sturmian operators.

The operator acts on an odd-sized box whose center carries the paper-site
index 1; letters are exact Sturmian values, truncation is Dirichlet.
Evolution runs through the full eigendecomposition, so column sums of
a(n,t) = |<e^{-itH} delta_1, delta_n>|^2 are unitary to roundoff and the
exponentially time-averaged probabilities

    <a(n,T)> = (2/T) int_0^inf e^{-2t/T} a(n,t) dt
             = sum_{j,k} c_j c_k v_j(n) v_k(n) eps^2/(eps^2 + (E_j-E_k)^2)

(eps = 2/T, c_j = v_j(center)) come in closed form.  The same averaged
quantity has the resolvent representation

    <a(n,T)> = (1/(T pi)) int |<(H-E-i/T)^{-1} delta_1, delta_n>|^2 dE,

evaluated independently through banded complex solves; the two routes
cross-check each other.  Transfer-matrix upper bounds integrate
(max_{n<=N} ||F(n, E+i/T)||^2)^{-1} over [-K, K] against T^3 (averaged)
or t^4 (plain), with unspecified prefactors reported as 1.

Dynamical exponents: P(N, t) = sum_{|n|>N} a(n,t); for each alpha the
slope of -ln P(t^alpha - 2, t) against ln t estimates S(alpha), and the
estimated alpha_u is the largest alpha whose slope stays below a
finiteness threshold (a desk-scale heuristic, exposed as a parameter).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cf import ContinuedFraction, convergents, sturmian_word
from .errors import NonConvergedError, ValidationError
from .numerics import (
    EigenSystem,
    QuadResult,
    TridiagMatrix,
    linfit,
    quadrature,
    quadrature_halfline,
    tridiag_eigh,
    tridiag_solve_complex,
)
from .spectrum import alpha_upper_bound, xi_c
from .tracemap import PHI, ModelParams, site_prefix_max_lognorm

BOUNDARY_MASS_TOL = 1e-6


# ---------------------------------------------------------------------------
# Operator construction
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class JacobiOperator:
    """Finite box of a Sturmian Jacobi operator, center = paper site 1."""

    size: int
    hopping: np.ndarray  # length size-1, coupling site i <-> i+1
    potential: np.ndarray  # length size
    params: ModelParams
    cf: ContinuedFraction
    center: int
    _eigen: Optional[EigenSystem] = field(default=None, repr=False)

    @property
    def sites(self) -> np.ndarray:
        """Paper-site indices of the box entries."""
        return np.arange(self.size) - self.center + 1

    def matrix(self) -> TridiagMatrix:
        return TridiagMatrix(diag=self.potential, offdiag=self.hopping)

    def eigen(self) -> EigenSystem:
        if self._eigen is None:
            self._eigen = tridiag_eigh(self.matrix())
        return self._eigen

    def norm_bound(self) -> float:
        return self.matrix().norm_bound()

    @property
    def spectral_window(self) -> float:
        return self.params.spectral_window


def build_operator(p: ModelParams, cf: ContinuedFraction, L: int) -> JacobiOperator:
    """Length-L box (odd L >= 3) with exact Sturmian coefficients."""
    if L < 3 or L % 2 == 0:
        raise ValidationError("box size must be odd and >= 3")
    center = (L - 1) // 2
    lo_site = 1 - center
    hi_site = 1 + center
    letters = sturmian_word(cf, lo_site, hi_site).astype(float)
    if p.kind == "offdiagonal":
        hopping = p.lambda2 + (p.lambda1 - p.lambda2) * letters[:-1]
        potential = np.zeros(L)
    else:
        hopping = np.ones(L - 1)
        potential = p.lambda1 * letters
    return JacobiOperator(
        size=L, hopping=hopping, potential=potential, params=p, cf=cf,
        center=center,
    )


# ---------------------------------------------------------------------------
# Time evolution
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ProbabilityGrid:
    """Site-occupation probabilities over a time grid."""

    times: np.ndarray
    sites: np.ndarray  # paper-site indices
    probs: np.ndarray  # shape (size, ntimes)
    averaged: bool
    valid: bool
    offending_time: Optional[float] = None

    def column(self, t: float) -> np.ndarray:
        idx = np.flatnonzero(np.isclose(self.times, t, rtol=1e-12, atol=1e-12))
        if idx.size == 0:
            raise ValidationError(f"time {t} is not on the grid")
        return self.probs[:, idx[0]]


def evolve(op: JacobiOperator, times: Sequence[float]) -> ProbabilityGrid:
    """a(n,t) for delta-start at the center, via the eigenbasis.

    Flags the grid invalid (with the first offending time) if more than
    1e-6 of the mass reaches the outermost two sites on either edge.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or (times < 0).any():
        raise ValidationError("times must be a nonempty nonnegative sequence")
    eig = op.eigen()
    c = eig.vectors[op.center, :]
    phases = np.exp(-1j * np.outer(eig.values, times))  # (L, T)
    amps = eig.vectors @ (c[:, None] * phases)
    probs = np.abs(amps) ** 2
    edge_mass = probs[:2, :].sum(axis=0) + probs[-2:, :].sum(axis=0)
    bad = np.flatnonzero(edge_mass > BOUNDARY_MASS_TOL)
    return ProbabilityGrid(
        times=times,
        sites=op.sites,
        probs=probs,
        averaged=False,
        valid=bad.size == 0,
        offending_time=float(times[bad[0]]) if bad.size else None,
    )


def outside_probability(grid: ProbabilityGrid, N: float, t: float) -> tuple[float, float, float]:
    """(P, P_r, P_l): mass at paper sites with |n| > N, n > N, n < -N."""
    if N < 0 or N >= (grid.sites.size - 1) // 2:
        raise ValidationError("N must satisfy 0 <= N < L/2")
    col = grid.column(t)
    right = float(col[grid.sites > N].sum())
    left = float(col[grid.sites < -N].sum())
    return right + left, right, left


def _second_moment(grid: ProbabilityGrid) -> np.ndarray:
    n = grid.sites.astype(float) - 1.0  # displacement from the start site
    return (grid.probs * (n ** 2)[:, None]).sum(axis=0)


def spreading_exponent(grid: ProbabilityGrid, t_min: float = 0.0) -> float:
    """Slope of ln sqrt(<n^2>) against ln t (ballistic free chain: 1)."""
    mask = grid.times > max(t_min, 0.0)
    if mask.sum() < 3:
        raise ValidationError("need at least 3 positive times")
    width = np.sqrt(_second_moment(grid)[mask])
    return linfit(np.log(grid.times[mask]), np.log(width)).slope


# ---------------------------------------------------------------------------
# Abelian (exponential) time averages
# ---------------------------------------------------------------------------

def averaged_profile(op: JacobiOperator, T: float) -> np.ndarray:
    """<a(n,T)> for all n, in closed form through the eigenbasis."""
    if T <= 0:
        raise ValidationError("T must be positive")
    eig = op.eigen()
    c = eig.vectors[op.center, :]
    eps = 2.0 / T
    diff = eig.values[:, None] - eig.values[None, :]
    kernel = eps * eps / (eps * eps + diff * diff)
    b = kernel * np.outer(c, c)
    w = eig.vectors @ b
    prof = np.einsum("nj,nj->n", w, eig.vectors)
    return np.maximum(prof, 0.0)


def averaged_outside(op: JacobiOperator, N: float, T: float) -> float:
    """<P(N,T)> = sum_{|n|>N} <a(n,T)>."""
    if T <= 1.0:
        raise ValidationError("the averaged bounds assume T > 1")
    if N < 0 or N >= (op.size - 1) // 2:
        raise ValidationError("N must satisfy 0 <= N < L/2")
    prof = averaged_profile(op, T)
    sites = op.sites
    return float(prof[np.abs(sites) > N].sum())


def averaged_grid(op: JacobiOperator, Ts: Sequence[float]) -> ProbabilityGrid:
    """Averaged profiles over a grid of averaging times."""
    Ts = np.asarray(Ts, dtype=float)
    probs = np.column_stack([averaged_profile(op, T) for T in Ts])
    edge_mass = probs[:2, :].sum(axis=0) + probs[-2:, :].sum(axis=0)
    bad = np.flatnonzero(edge_mass > BOUNDARY_MASS_TOL)
    return ProbabilityGrid(
        times=Ts, sites=op.sites, probs=probs, averaged=True,
        valid=bad.size == 0,
        offending_time=float(Ts[bad[0]]) if bad.size else None,
    )


# ---------------------------------------------------------------------------
# Parseval route (resolvent integrals)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParsevalResult:
    value: float
    tail_bound: float
    converged: bool

    def __float__(self) -> float:
        return self.value


def parseval_average(
    op: JacobiOperator, N: float, T: float, tol: float = 1e-7
) -> ParsevalResult:
    """<P(N,T)> from (1/(T pi)) int_{-K}^{K} ||chi_N R(E+i/T) delta_1||^2 dE.

    The |E| > K remainder is certified by the 1/dist resolvent bound and
    reported separately (it is at most 2/(T pi)).
    """
    if T <= 1.0:
        raise ValidationError("the averaged bounds assume T > 1")
    if N < 0 or N >= (op.size - 1) // 2:
        raise ValidationError("N must satisfy 0 <= N < L/2")
    H = op.matrix()
    rhs = np.zeros(op.size, dtype=complex)
    rhs[op.center] = 1.0
    outside = np.abs(op.sites) > N
    eps = 1.0 / T
    K = op.spectral_window

    def integrand(E: float) -> float:
        x = tridiag_solve_complex(H, E + 1j * eps, rhs)
        return float(np.sum(np.abs(x[outside]) ** 2))

    quad = quadrature(integrand, -K, K, tol=tol)
    return ParsevalResult(
        value=quad.value / (T * math.pi),
        tail_bound=2.0 / (T * math.pi),
        converged=quad.converged,
    )


def parseval_identity(op: JacobiOperator, T: float, tol: float = 1e-7) -> QuadResult:
    """Total mass through the resolvent route; equals 1 exactly.

    Integrates ||R(E+i/T) delta_1||^2 over the whole line: [-K, K]
    adaptively plus substitution-transformed tails.
    """
    if T <= 0:
        raise ValidationError("T must be positive")
    H = op.matrix()
    rhs = np.zeros(op.size, dtype=complex)
    rhs[op.center] = 1.0
    eps = 1.0 / T
    K = op.spectral_window

    def integrand(E: float) -> float:
        x = tridiag_solve_complex(H, E + 1j * eps, rhs)
        return float(np.sum(np.abs(x) ** 2))

    core = quadrature(integrand, -K, K, tol=tol)
    tail_r = quadrature_halfline(integrand, K, tol=tol)
    tail_l = quadrature_halfline(lambda E: integrand(-E), K, tol=tol)
    total = (core.value + tail_r.value + tail_l.value) / (T * math.pi)
    err = (core.error + tail_r.error + tail_l.error) / (T * math.pi)
    ok = core.converged and tail_r.converged and tail_l.converged
    return QuadResult(total, err, ok, core.nevals + tail_r.nevals + tail_l.nevals)


# ---------------------------------------------------------------------------
# Transfer-matrix upper bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransferBound:
    value: float
    exp_term: float
    integral_term: float
    converged: bool
    informative: bool

    def __float__(self) -> float:
        return self.value


def transfer_bound_rhs(
    p: ModelParams,
    cf: ContinuedFraction,
    N: int,
    T: float,
    averaged: bool = True,
    tol: float = 1e-8,
) -> TransferBound:
    """Right side of the outside-probability upper bound, prefactor 1.

    exp(-N) + T^3 int (max_{n<=N} ||F||^2)^{-1} dE for the averaged
    version; the plain version carries T^4.  Values >= 1 are flagged
    non-informative (the free chain always lands there).
    """
    if T <= 1.0:
        raise ValidationError("bounds assume T > 1")
    if N < 1:
        raise ValidationError("N must be >= 1")
    K = p.spectral_window
    eps = 1.0 / T

    def integrand(E: float) -> float:
        ln_norm = site_prefix_max_lognorm(p, cf, E + 1j * eps, N)
        return math.exp(-2.0 * ln_norm)

    quad = quadrature(integrand, -K, K, tol=tol)
    power = 3.0 if averaged else 4.0
    exp_term = math.exp(-float(N))
    integral_term = T ** power * quad.value
    value = exp_term + integral_term
    return TransferBound(
        value=value,
        exp_term=exp_term,
        integral_term=integral_term,
        converged=quad.converged,
        informative=value < 1.0,
    )


def scale_N_of_T(cf: ContinuedFraction, p: ModelParams, T: float) -> int:
    """Site scale N(T) = F_{k(T) + floor(sqrt(k(T)))}.

    k(T) is located from F_{k-1}^gamma <= T <= F_k^gamma with
    gamma(c) = ln(xi_c) / (2 ln phi) and the scale constant d = 1.
    """
    c = p.coupling
    if c <= 8.0:
        raise ValidationError("N(T) scale requires coupling c > 8")
    if T <= 1.0:
        raise ValidationError("T must be > 1")
    gamma = math.log(xi_c(c)) / (2.0 * math.log(PHI))
    k = 2
    while True:
        table = convergents(cf, k + math.isqrt(k) + 2)
        fk = table.q(k)
        if fk > 1 and fk ** gamma >= T:
            break
        k += 1
        if k > 300:
            raise NonConvergedError("k(T) search did not terminate")
    return int(table.q(k + math.isqrt(k)))


# ---------------------------------------------------------------------------
# Exponent fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransportSummary:
    alpha_estimates: dict
    slopes: dict
    theoretical_bound: Optional[float]


PROB_FLOOR = 1e-12  # unitarity noise floor of the finite-box evolution


def _outside_series(grid: ProbabilityGrid, alpha: float) -> np.ndarray:
    out = np.empty_like(grid.times)
    for i, t in enumerate(grid.times):
        n_cut = max(t ** alpha - 2.0, 0.0)
        out[i] = grid.probs[np.abs(grid.sites) > n_cut, i].sum()
    return out


def fit_exponents(
    grid: ProbabilityGrid,
    alphas: Sequence[float],
    threshold: float = 10.0,
    params: Optional[ModelParams] = None,
) -> TransportSummary:
    """Estimate the upper transport exponent from outside probabilities.

    For each alpha, fit -ln P(t^alpha - 2, t) against ln t; alpha_u is the
    largest alpha whose slope stays below `threshold`.  Probabilities at
    the unitarity floor count as superpolynomially small.  Works on plain
    grids (alpha_u) and averaged grids (tilde alpha_u) alike.
    """
    times = grid.times
    pos = times > 0
    if pos.sum() < 5:
        raise ValidationError("need at least 5 positive times")
    logt = np.log(times[pos])
    if logt.max() - logt.min() < 1.5 * math.log(10.0):
        raise ValidationError("time grid must span at least 1.5 decades")
    alphas = sorted(float(a) for a in alphas)
    if not alphas:
        raise ValidationError("need at least one alpha")
    slopes = {}
    alpha_u = None
    for alpha in alphas:
        p_out = _outside_series(grid, alpha)[pos]
        if (p_out < PROB_FLOOR).any():
            slopes[alpha] = math.inf
        else:
            slopes[alpha] = linfit(logt, -np.log(p_out)).slope
        if slopes[alpha] < threshold:
            alpha_u = alpha
    key = "alpha_u_tilde" if grid.averaged else "alpha_u"
    bound = None
    if params is not None and params.coupling > 8.0:
        bound = alpha_upper_bound(params)
    estimates = {key: alpha_u if alpha_u is not None else 0.0}
    return TransportSummary(
        alpha_estimates=estimates, slopes=slopes, theoretical_bound=bound
    )
