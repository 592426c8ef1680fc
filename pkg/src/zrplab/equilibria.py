"""Equilibrium calculus for the disordered zero-range process.

Single-site laws mu_psi with partition value Z(psi), quenched product measures
nu^alpha_phi, the density map rho(phi) = E_Q[M(phi/alpha)], the critical
density rho* (possibly infinite), and the flux function f(rho) obtained by
inverting the density map and extended flat at value c*r_inf above rho*.

Fugacity conventions: phi is the fugacity of the quenched product measure and
equals the stationary bond current through any site, for every rate function.
With the unit-rate indicator rate function r_inf = 1 and the flat flux value
is the bare left endpoint c.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .environment import (
    DisorderLaw,
    FiniteSupport,
    RateField,
    RateFunction,
    ShiftedBeta,
    UniformInterval,
)
from .rng import philox

__all__ = [
    "partition_function",
    "mean_occupancy",
    "mean_occupancy_inverse",
    "density_rho",
    "critical_density",
    "flux_f",
    "SingleSiteLaw",
    "QuenchedProductLaw",
    "FluxTable",
    "build_flux_table",
    "sample_product_measure",
    "critical_density_report",
]

SERIES_TOL = 1e-12


def _series_sums(psi: float, rate: RateFunction) -> tuple[float, float]:
    """Return (Z, S1) with Z = sum psi^k / R(k) and S1 = sum k psi^k / R(k).

    Terms are summed explicitly up to k_max; beyond k_max the rate is constant
    at r_inf, so the remaining tail is an exact geometric series and is added
    in closed form (error 0, well under the 1e-12 budget even as psi -> r_inf).
    """
    if psi < 0.0:
        raise ValueError(f"fugacity must be nonnegative, got {psi!r}")
    if psi >= rate.r_inf:
        raise ValueError(
            f"fugacity {psi!r} >= tail rate {rate.r_inf!r}: series diverges"
        )
    Z = 1.0
    S1 = 0.0
    term = 1.0
    for k in range(1, rate.k_max + 1):
        term *= psi / rate(k)
        Z += term
        S1 += k * term
    q = psi / rate.r_inf
    if q > 0.0:
        # sum_{j>=1} term * q^j  and  sum_{j>=1} (k_max + j) term * q^j
        geo = q / (1.0 - q)
        Z += term * geo
        S1 += term * (rate.k_max * geo + q / (1.0 - q) ** 2)
    return Z, S1


def partition_function(psi: float, rate: RateFunction) -> float:
    """Normalization Z(psi) of the single-site equilibrium law."""
    Z, _ = _series_sums(psi, rate)
    return Z


def mean_occupancy(psi: float, rate: RateFunction) -> float:
    """Mean M(psi) of the single-site law; strictly increasing on [0, r_inf)."""
    Z, S1 = _series_sums(psi, rate)
    return S1 / Z


def mean_occupancy_inverse(rho: float, rate: RateFunction, tol: float = 1e-13) -> float:
    """Fugacity psi with M(psi) = rho, by bisection on [0, r_inf)."""
    if rho < 0.0:
        raise ValueError("density must be nonnegative")
    if rho == 0.0:
        return 0.0
    lo, hi = 0.0, rate.r_inf * (1.0 - 1e-16)
    # expand the bracket from below r_inf until M(hi) >= rho
    while mean_occupancy(hi, rate) < rho:
        hi = rate.r_inf - (rate.r_inf - hi) * 0.5
        if rate.r_inf - hi < 1e-300:
            raise ValueError(f"density {rho!r} not attainable below the tail rate")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_occupancy(mid, rate) < rho:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Density map and critical density
# ---------------------------------------------------------------------------

def density_rho(phi: float, law: DisorderLaw, rate: RateFunction) -> float:
    """Quenched-averaged density rho(phi) = E_Q[M(phi/alpha)].

    Exact weighted sum for finite-support laws; adaptive quadrature (relative
    error ~1e-9) for continuous laws.  Requires 0 <= phi < r_inf * c.
    """
    top = rate.r_inf * law.c
    if not (0.0 <= phi < top):
        raise ValueError(f"fugacity must lie in [0, {top!r}), got {phi!r}")
    if phi == 0.0:
        return 0.0
    return law.expect(lambda a: mean_occupancy(phi / a, rate))


def _critical_density_quadrature(law: DisorderLaw, rate: RateFunction,
                                 cap: float = 1e12) -> float:
    """E_Q[M(r_inf*c/alpha)] for continuous laws, with divergence detection.

    Integrates over [c + eps, 1] on a shrinking ladder of eps; if the
    increments stop decaying geometrically (integrand ~ 1/(alpha-c)) or the
    running value exceeds the cap, the integral is declared infinite.
    Otherwise the geometric tail of the ladder is added by extrapolation.
    """
    c = law.c
    arg = rate.r_inf * c

    def integrand(a):
        return mean_occupancy(arg / a, rate)

    width = 1.0 - c
    values = []
    prev_inc = None
    ratio = 0.0
    for j in range(2, 12):
        eps = width * 10.0 ** (-j)
        with warnings.catch_warnings():
            # probing a possibly divergent endpoint: accuracy warnings expected
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(
                lambda a: integrand(a) * float(law.pdf(a)), c + eps, 1.0,
                epsabs=1e-13, epsrel=1e-11, limit=400,
            )
        if not math.isfinite(val) or val > cap:
            return math.inf
        if values:
            inc = val - values[-1]
            if inc < -1e-9 * max(1.0, abs(val)):
                # quadrature breakdown at the singular endpoint: the pattern
                # seen so far decides (growing increments mean divergence)
                return math.inf if (prev_inc is not None and prev_inc > 0) \
                    else float(values[-1])
            if prev_inc is not None and prev_inc > 0.0:
                ratio = inc / prev_inc
                if ratio > 0.9:
                    return math.inf  # increments not decaying: 1/(alpha-c) or worse
            prev_inc = inc
        values.append(val)
    tail = max(prev_inc or 0.0, 0.0)
    r = min(max(ratio, 0.0), 0.89)
    return float(values[-1] + tail * r / (1.0 - r))


def critical_density(law: DisorderLaw, rate: RateFunction) -> float:
    """Maximal density rho* carried by the product equilibria (may be inf).

    Infinite whenever the law puts mass at its left endpoint c (so for every
    finite-support law).  For the unit-rate indicator rate function the exact
    identity rho* = c * E_Q[(alpha - c)^-1] is used where it is available in
    closed form; otherwise quadrature with a divergence test decides.
    """
    if law.has_atom_at_c:
        return math.inf
    if rate.is_indicator:
        if isinstance(law, UniformInterval):
            return math.inf  # logarithmic divergence at the left endpoint
        if isinstance(law, ShiftedBeta):
            if law.a <= 1.0:
                return math.inf
            return law.c * (law.a + law.b - 1.0) / ((law.a - 1.0) * (1.0 - law.c))
    return _critical_density_quadrature(law, rate)


def flux_f(rho: float, law: DisorderLaw, rate: RateFunction,
           tol: float = 1e-10) -> float:
    """Stationary flux at density rho: the fugacity phi with rho(phi) = rho.

    For rho >= rho* (finite rho*) the flux saturates at c * r_inf.  Inversion
    is by bisection on [0, r_inf*c), unconditionally safe because the density
    map is strictly increasing with a possibly exploding derivative near the
    top of the fugacity range.
    """
    if rho < 0.0:
        raise ValueError("density must be nonnegative")
    if rho == 0.0:
        return 0.0
    top = rate.r_inf * law.c
    rho_star = critical_density(law, rate)
    if rho >= rho_star:
        return top
    lo, hi = 0.0, top * (1.0 - 1e-14)
    # rho < rho* guarantees a root strictly inside; guard the upper end anyway
    if density_rho(hi, law, rate) < rho:
        return top
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if density_rho(mid, law, rate) < rho:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Single-site and quenched product laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SingleSiteLaw:
    """Single-site equilibrium with weights psi^k / (r(1)...r(k)) / Z(psi)."""

    psi: float
    rate: RateFunction
    Z: float = field(init=False)
    probabilities: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        Z = partition_function(self.psi, self.rate)
        object.__setattr__(self, "Z", Z)
        probs = [1.0 / Z]
        term = 1.0
        k = 1
        q = self.psi / self.rate.r_inf
        # table out to where the remaining geometric tail is < 1e-15
        while True:
            term *= self.psi / self.rate(k)
            probs.append(term / Z)
            if k >= self.rate.k_max and (q == 0.0 or term / Z * q / (1.0 - q) < 1e-15):
                break
            if k > 100_000:
                break
            k += 1
        arr = np.array(probs)
        arr.flags.writeable = False
        object.__setattr__(self, "probabilities", arr)

    @property
    def mean(self) -> float:
        return mean_occupancy(self.psi, self.rate)

    def cdf(self, k: int) -> float:
        return float(np.sum(self.probabilities[: k + 1]))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.psi == 0.0:
            return np.zeros(size, dtype=np.int64)
        if self.rate.is_indicator:
            # geometric with success probability 1 - psi
            u = rng.random(size)
            return np.floor(np.log(u) / np.log(self.psi)).astype(np.int64)
        u = rng.random(size)
        cums = np.cumsum(self.probabilities)
        out = np.searchsorted(cums, u).astype(np.int64)
        # beyond the tabulated range the conditional law is geometric in q
        over = out >= len(self.probabilities)
        if np.any(over):
            q = self.psi / self.rate.r_inf
            idx = np.flatnonzero(over)
            v = rng.random(len(idx))
            out[idx] = len(self.probabilities) + np.floor(
                np.log(v) / np.log(q)
            ).astype(np.int64)
        return out


@dataclass(frozen=True)
class QuenchedProductLaw:
    """Product measure with site marginal fugacity phi / alpha_x."""

    phi: float
    field: RateField
    rate: RateFunction

    def __post_init__(self):
        top = self.rate.r_inf * float(np.min(self.field.alphas))
        if not (0.0 <= self.phi < top):
            raise ValueError(
                f"fugacity {self.phi!r} leaves some site marginal undefined "
                f"(needs phi < {top!r})"
            )

    def site_mean(self, x: int) -> float:
        return mean_occupancy(self.phi / self.field.alphas[x], self.rate)

    def marginal(self, x: int) -> SingleSiteLaw:
        return SingleSiteLaw(self.phi / float(self.field.alphas[x]), self.rate)


def sample_product_measure(law_rho: QuenchedProductLaw, seed: int) -> np.ndarray:
    """Independent site draws from the quenched product measure."""
    phi = law_rho.phi
    alphas = law_rho.field.alphas
    rate = law_rho.rate
    rng = philox(seed, "product-measure")
    L = len(alphas)
    if phi == 0.0:
        return np.zeros(L, dtype=np.int64)
    if rate.is_indicator:
        q = phi / alphas
        u = rng.random(L)
        return np.floor(np.log(u) / np.log(q)).astype(np.int64)
    # general rate: vectorized inverse CDF over sites, exact geometric tail
    psi = phi / alphas
    u = rng.random(L)
    out = np.zeros(L, dtype=np.int64)
    Z = np.array([partition_function(p, rate) for p in psi])
    term = np.ones(L)
    cum = 1.0 / Z
    remaining = u >= cum
    k = 0
    while np.any(remaining):
        k += 1
        term = term * psi / rate(k)
        cum = cum + term / Z
        newly = remaining & (u < cum)
        out[newly] = k
        remaining &= ~newly
        if k >= rate.k_max and np.any(remaining):
            # conditional tail beyond k is geometric with ratio psi / r_inf
            idx = np.flatnonzero(remaining)
            q = psi[idx] / rate.r_inf
            v = rng.random(len(idx))
            out[idx] = k + 1 + np.floor(np.log(v) / np.log(q)).astype(np.int64)
            break
    return out


# ---------------------------------------------------------------------------
# Flux tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FluxTable:
    """Sampled graph of the macroscopic flux on a uniform density grid.

    Nondecreasing and concave, flat at value c*r_inf for rho >= rho_star when
    the critical density is finite.  PDE solvers consume tables, not
    callables, so their kernels stay allocation-free.
    """

    rho: np.ndarray
    f: np.ndarray
    rho_star: float
    c: float

    def __post_init__(self):
        rho = np.ascontiguousarray(self.rho, float)
        f = np.ascontiguousarray(self.f, float)
        if rho.ndim != 1 or rho.shape != f.shape or len(rho) < 2:
            raise ValueError("flux table needs matching 1-d grids of length >= 2")
        if np.any(np.diff(rho) <= 0.0):
            raise ValueError("density grid must be strictly increasing")
        rho.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "f", f)

    @property
    def rho_max(self) -> float:
        return float(self.rho[-1])

    @property
    def grid_step(self) -> float:
        return float(np.max(np.diff(self.rho)))

    def __call__(self, u):
        return np.interp(u, self.rho, self.f)

    def derivative_range(self) -> tuple[float, float]:
        slopes = np.diff(self.f) / np.diff(self.rho)
        return float(np.min(slopes)), float(np.max(slopes))

    def is_concave(self, tol: float | None = None) -> bool:
        if tol is None:
            tol = 1e-9 * max(1.0, float(np.max(np.abs(self.f))))
        mid = 0.5 * (self.f[:-2] + self.f[2:])
        return bool(np.all(self.f[1:-1] >= mid - tol))

    def is_nondecreasing(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.diff(self.f) >= -tol))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("rho,f\n")
            for r, v in zip(self.rho, self.f):
                fh.write(f"{float(r)!r},{float(v)!r}\n")

    @staticmethod
    def from_function(func, rho_max: float, n: int = 1001,
                      rho_star: float = math.inf, c: float = 0.0) -> "FluxTable":
        rho = np.linspace(0.0, rho_max, n)
        return FluxTable(rho, np.asarray([func(r) for r in rho], float), rho_star, c)


def build_flux_table(law: DisorderLaw, rate: RateFunction, rho_max: float,
                     n: int | None = None) -> FluxTable:
    """Tabulate the flux on a uniform density grid [0, rho_max].

    The density map is sampled once on a fugacity grid refined toward the top
    of the fugacity range (where the density may blow up or flatten), then
    inverted monotonically onto the density grid; densities at or above
    rho_star take the flat value.  Grid default: step 1e-3 * rho_max.
    """
    if n is None:
        n = 1001
    top = rate.r_inf * law.c
    rho_star = critical_density(law, rate)
    # fugacity grid, log-refined toward the top
    u = np.unique(np.concatenate([
        np.linspace(0.0, 1.0, 2049)[:-1],
        1.0 - np.logspace(-12, -0.5, 200),
    ]))
    u = u[(u >= 0.0) & (u < 1.0)]
    phis = np.sort(u) * top
    rhos = np.array([density_rho(p, law, rate) for p in phis])
    keep = np.isfinite(rhos)
    phis, rhos = phis[keep], rhos[keep]
    grid = np.linspace(0.0, rho_max, n)
    f = np.interp(grid, rhos, phis, left=0.0, right=top)
    if math.isfinite(rho_star):
        f[grid >= rho_star] = top
    return FluxTable(grid, f, rho_star, law.c)


def critical_density_report(law: DisorderLaw, rate: RateFunction) -> dict:
    """JSON-ready record {law, rho_star, c}; infinite rho* serializes as 'inf'."""
    rho_star = critical_density(law, rate)
    return {
        "law": repr(law),
        "rho_star": "inf" if math.isinf(rho_star) else rho_star,
        "c": law.c,
    }


def critical_density_json(law: DisorderLaw, rate: RateFunction, path) -> None:
    with open(path, "w") as fh:
        json.dump(critical_density_report(law, rate), fh, sort_keys=True, indent=2)
        fh.write("\n")
