"""Hydrodynamic-scaling experiments.

A macroscopic window [x_lo, x_hi) is represented by an L = n (x_hi - x_lo)
site ring; site i sits at macroscopic coordinate x_lo + i/n.  Experiments
sample an initial configuration matching a profile, evolve to microscopic
time n t, form the rescaled empirical measure, and compare against the
entropy solution produced by the pde module.  Windows are padded so that no
information from the periodic wrap reaches any test function by time n t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats as sstats

from .dynamics import Configuration, configuration_at_density, measure_current, run_kexclusion, run_zrp
from .environment import DisorderLaw, RateField, RateFunction, TOTALLY_ASYMMETRIC, sample_rate_field
from .equilibria import (
    FluxTable,
    QuenchedProductLaw,
    SingleSiteLaw,
    build_flux_table,
    mean_occupancy_inverse,
    sample_product_measure,
)
from .pde import Profile, lax_oleinik_solve, riemann_solution_field
from .rng import philox, seed_label

__all__ = [
    "Triangular",
    "TruncatedGaussian",
    "SmoothedIndicator",
    "MacroWindow",
    "EmpiricalMeasureSample",
    "empirical_measure",
    "sample_initial_profile",
    "ScalingSpec",
    "ComparisonReport",
    "run_scaling_experiment",
    "PhaseDiagnostics",
    "platoon_diagnostics",
    "EmpiricalFlux",
    "estimate_flux_empirical",
    "gaps_to_zrp",
    "positions_from_gaps",
]


# ---------------------------------------------------------------------------
# Test functions (compactly supported, analytic integrals)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Triangular:
    """Triangular bump of the given half-width and height."""

    center: float = 0.0
    half_width: float = 1.0
    height: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, float)
        return self.height * np.maximum(0.0, 1.0 - np.abs(x - self.center) / self.half_width)

    @property
    def support(self) -> tuple[float, float]:
        return (self.center - self.half_width, self.center + self.half_width)

    @property
    def abs_integral(self) -> float:
        return self.height * self.half_width

    @property
    def test_id(self) -> str:
        return f"tri({self.center},{self.half_width},{self.height})"


@dataclass(frozen=True)
class TruncatedGaussian:
    """Gaussian bump shifted to vanish at the truncation radius."""

    center: float = 0.0
    sigma: float = 0.5
    radius: float = 1.5

    def __call__(self, x):
        x = np.asarray(x, float)
        inside = np.abs(x - self.center) <= self.radius
        floor_ = math.exp(-self.radius ** 2 / (2 * self.sigma ** 2))
        vals = np.exp(-((x - self.center) ** 2) / (2 * self.sigma ** 2)) - floor_
        return np.where(inside, np.maximum(vals, 0.0), 0.0)

    @property
    def support(self) -> tuple[float, float]:
        return (self.center - self.radius, self.center + self.radius)

    @property
    def abs_integral(self) -> float:
        s, r = self.sigma, self.radius
        gauss_part = s * math.sqrt(2 * math.pi) * math.erf(r / (s * math.sqrt(2)))
        return gauss_part - 2 * r * math.exp(-r ** 2 / (2 * s ** 2))

    @property
    def test_id(self) -> str:
        return f"gauss({self.center},{self.sigma},{self.radius})"


@dataclass(frozen=True)
class SmoothedIndicator:
    """Indicator of [a, b] smoothed by cosine ramps of the given width."""

    a: float
    b: float
    ramp: float = 0.25

    def __post_init__(self):
        if not (self.b - self.a > 2 * self.ramp > 0):
            raise ValueError("need b - a > 2 * ramp > 0")

    def __call__(self, x):
        x = np.asarray(x, float)
        out = np.zeros_like(x)
        up = (x >= self.a) & (x < self.a + self.ramp)
        out[up] = 0.5 * (1 - np.cos(math.pi * (x[up] - self.a) / self.ramp))
        mid = (x >= self.a + self.ramp) & (x <= self.b - self.ramp)
        out[mid] = 1.0
        down = (x > self.b - self.ramp) & (x <= self.b)
        out[down] = 0.5 * (1 - np.cos(math.pi * (self.b - x[down]) / self.ramp))
        return out

    @property
    def support(self) -> tuple[float, float]:
        return (self.a, self.b)

    @property
    def abs_integral(self) -> float:
        return (self.b - self.a) - self.ramp

    @property
    def test_id(self) -> str:
        return f"plateau({self.a},{self.b},{self.ramp})"


TestFunction = Triangular | TruncatedGaussian | SmoothedIndicator


# ---------------------------------------------------------------------------
# Windows and empirical measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MacroWindow:
    """Macroscopic interval [x_lo, x_hi) carried by an n-per-unit ring."""

    x_lo: float
    x_hi: float
    n: int

    @property
    def L(self) -> int:
        return int(round((self.x_hi - self.x_lo) * self.n))

    def coords(self) -> np.ndarray:
        return self.x_lo + np.arange(self.L) / self.n


@dataclass(frozen=True)
class EmpiricalMeasureSample:
    n: int
    t: float
    pairings: dict
    block_x: np.ndarray
    block_density: np.ndarray
    block_width_sites: int


def empirical_measure(config: Configuration, window: MacroWindow,
                      tests=(), t: float = 0.0,
                      block_width_sites: int | None = None) -> EmpiricalMeasureSample:
    """Rescaled pairings (1/n) sum_x eta(x) phi(x/n) plus a block profile."""
    if config.L != window.L:
        raise ValueError("configuration and window disagree on L")
    n = window.n
    coords = window.coords()
    occ = config.occupancies
    pairings = {}
    for phi in tests:
        pairings[phi.test_id] = float(np.dot(occ, phi(coords)) / n)
    w = block_width_sites or max(1, math.ceil(math.sqrt(n)))
    nblocks = config.L // w
    trimmed = occ[: nblocks * w].reshape(nblocks, w)
    dens = trimmed.mean(axis=1)
    bx = coords[: nblocks * w].reshape(nblocks, w).mean(axis=1)
    return EmpiricalMeasureSample(n=n, t=t, pairings=pairings,
                                  block_x=bx, block_density=dens,
                                  block_width_sites=w)


# ---------------------------------------------------------------------------
# Initial sampling
# ---------------------------------------------------------------------------

def sample_initial_profile(u0: Profile, window: MacroWindow, field_: RateField,
                           rate: RateFunction | None, mode: str, seed: int,
                           cap: int | None = None) -> Configuration:
    """Independent-site initial configuration matching a macroscopic profile.

    mode "marginal": site x draws from the homogeneous single-site equilibrium
    whose mean is u0(x/n); requires sup u0 to stay strictly below the density
    reachable at fugacity r_inf * c.  mode "rounded": floor(u0) plus a
    Bernoulli for the fractional part (any-density, low variance).  mode
    "binomial": Binomial(cap, u0/cap), only for capped models.
    """
    if field_.L != window.L:
        raise ValueError("rate field and window disagree on L")
    coords = window.coords()
    u = np.asarray(u0(coords), float)
    if np.any(u < 0.0) or not np.all(np.isfinite(u)):
        raise ValueError("profile must be finite and nonnegative")
    rng = philox(seed, "initial-profile")
    if mode == "marginal":
        if rate is None:
            raise ValueError("marginal mode needs the rate function")
        sup = float(np.max(u))
        psi_sup = mean_occupancy_inverse(sup, rate) if sup > 0 else 0.0
        if psi_sup >= rate.r_inf * field_.c - 1e-12:
            raise ValueError(
                "profile too high for marginal sampling: needs sup u0 < density "
                f"at fugacity r_inf*c = {rate.r_inf * field_.c!r}"
            )
        occ = np.zeros(window.L, dtype=np.int64)
        for val in np.unique(u):
            sel = np.flatnonzero(u == val)
            if val == 0.0:
                continue
            psi = mean_occupancy_inverse(float(val), rate)
            law = SingleSiteLaw(psi, rate)
            occ[sel] = law.sample(rng, len(sel))
        return Configuration(occ, cap)
    if mode == "rounded":
        base = np.floor(u)
        frac = u - base
        occ = base.astype(np.int64) + (rng.random(window.L) < frac).astype(np.int64)
        if cap is not None:
            occ = np.minimum(occ, cap)
        return Configuration(occ, cap)
    if mode == "binomial":
        if cap is None:
            raise ValueError("binomial mode needs a cap")
        if np.any(u > cap):
            raise ValueError("profile exceeds the cap")
        occ = rng.binomial(cap, u / cap).astype(np.int64)
        return Configuration(occ, cap)
    raise ValueError(f"unknown sampling mode {mode!r}")


# ---------------------------------------------------------------------------
# Scaling experiments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingSpec:
    """Declarative description of one hydrodynamic-limit experiment."""

    law: DisorderLaw
    rate: RateFunction
    u0: Profile
    t: float
    scales: tuple[int, ...]
    tests: tuple
    replicas: int
    seed: int
    mode: str = "marginal"
    pad_margin: float = 2.0
    extra_pad: float = 0.5
    quenched_fixed: bool = False
    block_window: tuple[float, float] | None = None
    block_width_macro: float = 1.0
    rho_table_max: float | None = None

    def interest_interval(self) -> tuple[float, float]:
        los, his = [], []
        for phi in self.tests:
            s = phi.support
            los.append(s[0])
            his.append(s[1])
        if self.block_window is not None:
            los.append(self.block_window[0])
            his.append(self.block_window[1])
        if not los:
            raise ValueError("experiment needs at least one test function or block window")
        return min(los), max(his)


@dataclass
class ComparisonReport:
    """Per-scale discrepancies against the entropy solution, with CIs."""

    spec: ScalingSpec
    window: dict
    rows: list = field(default_factory=list)          # scale/test/replica/D
    block_rows: list = field(default_factory=list)    # scale/replica/block L1
    summary: dict = field(default_factory=dict)       # (scale, test) -> mean/se
    block_summary: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)     # test -> integral phi u(t)
    seeds: list = field(default_factory=list)
    sentinel_violations: list = field(default_factory=list)
    block_profiles: dict = field(default_factory=dict)

    def d_values(self, scale: int, test_id: str) -> np.ndarray:
        return np.array([r["D"] for r in self.rows
                         if r["scale"] == scale and r["test_id"] == test_id])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("scale,test_id,replica,D\n")
            for r in self.rows:
                fh.write(f"{r['scale']},{r['test_id']},{r['replica']},{float(r['D'])!r}\n")
            for (scale, tid), s in sorted(self.summary.items(), key=lambda kv: (kv[0][0], kv[0][1])):
                fh.write(f"{scale},{tid},mean,{float(s['mean'])!r}\n")
                fh.write(f"{scale},{tid},se,{float(s['se'])!r}\n")

    def block_profile_to_csv(self, path, scale: int | None = None) -> None:
        scale = scale if scale is not None else max(self.block_profiles)
        x, emp, ref = self.block_profiles[scale]
        with open(path, "w", newline="") as fh:
            fh.write("x,u_empirical,u_pde\n")
            for a, b, c in zip(x, emp, ref):
                fh.write(f"{float(a)!r},{float(b)!r},{float(c)!r}\n")


def _reference_solution(spec: ScalingSpec, flux: FluxTable, x_lo, x_hi):
    """Entropy solution on a fine grid over the window at time t."""
    dx = min(1e-3, (x_hi - x_lo) / 4000)
    grid = np.arange(x_lo, x_hi + dx, dx)
    if spec.t == 0.0:
        return grid, np.asarray(spec.u0(grid), float)
    if spec.u0.is_two_piece_step:
        shifted = grid - float(spec.u0.x[0])
        sol = riemann_solution_field(spec.u0.values[0], spec.u0.values[1],
                                     flux, shifted, spec.t)
        return grid, sol.u
    if spec.u0.kind == "piecewise" and len(spec.u0.values) == 1:
        return grid, np.full_like(grid, spec.u0.values[0])
    sol = lax_oleinik_solve(spec.u0, flux, grid, spec.t)
    return grid, sol.u


def run_scaling_experiment(spec: ScalingSpec) -> ComparisonReport:
    """Evolve to microscopic time n t at each scale and compare pairings
    against the entropy solution; quenched field fresh per replica unless
    pinned by quenched_fixed."""
    if spec.rate.r_inf <= 0:
        raise ValueError("rate function required")
    scales = tuple(spec.scales)
    if any(b <= a for a, b in zip(scales, scales[1:])):
        raise ValueError("scales must increase")
    rho_max = spec.rho_table_max or max(2.0 * max(spec.u0.max, 0.5), 1.0)
    flux = build_flux_table(spec.law, spec.rate, rho_max)
    lo_d, hi_d = flux.derivative_range()
    vmax = max(abs(lo_d), abs(hi_d))
    a, b = spec.interest_interval()
    pad = spec.pad_margin * spec.t * vmax + spec.extra_pad
    x_lo, x_hi = a - pad, b + pad
    ref_x, ref_u = _reference_solution(spec, flux, x_lo, x_hi)
    report = ComparisonReport(spec=spec, window={"x_lo": x_lo, "x_hi": x_hi})
    for phi in spec.tests:
        vals = phi(ref_x) * ref_u
        report.reference[phi.test_id] = float(np.trapezoid(vals, ref_x))
    if spec.block_window is not None:
        bw_lo, bw_hi = spec.block_window
    for n in scales:
        window = MacroWindow(x_lo, x_hi, n)
        horizon = n * spec.t
        for rep in range(spec.replicas):
            field_seed = (spec.seed, "field", 0, 0) if spec.quenched_fixed \
                else (spec.seed, "field", n, rep)
            field_ = sample_rate_field(spec.law, window.L,
                                       _fold_seed(*field_seed))
            init = sample_initial_profile(spec.u0, window, field_, spec.rate,
                                          spec.mode,
                                          _fold_seed(spec.seed, "init", n, rep))
            run_seed = _fold_seed(spec.seed, "run", n, rep)
            result = run_zrp(field_, TOTALLY_ASYMMETRIC, spec.rate, init,
                             horizon, run_seed)
            report.seeds.append(seed_label(spec.seed, n, rep))
            sample = empirical_measure(result.config, window, spec.tests,
                                       t=spec.t)
            for phi in spec.tests:
                D = abs(sample.pairings[phi.test_id] - report.reference[phi.test_id])
                report.rows.append({"scale": n, "test_id": phi.test_id,
                                    "replica": rep, "D": D})
            if spec.block_window is not None:
                w_sites = max(1, int(round(spec.block_width_macro * n)))
                coarse = empirical_measure(result.config, window, (),
                                           t=spec.t, block_width_sites=w_sites)
                sel = (coarse.block_x >= bw_lo - 1e-9) & (coarse.block_x <= bw_hi + 1e-9)
                ref_blocks = np.array([
                    float(np.mean(ref_u[(ref_x >= bx - spec.block_width_macro / 2)
                                        & (ref_x < bx + spec.block_width_macro / 2)]))
                    for bx in coarse.block_x[sel]
                ])
                l1 = float(np.sum(np.abs(coarse.block_density[sel] - ref_blocks))
                           * spec.block_width_macro)
                report.block_rows.append({"scale": n, "replica": rep, "L1": l1})
                report.block_profiles[n] = (
                    coarse.block_x[sel], coarse.block_density[sel], ref_blocks)
            _sentinel_check(report, result.config, window, spec, ref_x, ref_u, n, rep)
    for n in scales:
        for phi in spec.tests:
            vals = report.d_values(n, phi.test_id)
            report.summary[(n, phi.test_id)] = {
                "mean": float(np.mean(vals)),
                "se": float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
                if len(vals) > 1 else 0.0,
            }
        if spec.block_window is not None:
            vals = np.array([r["L1"] for r in report.block_rows if r["scale"] == n])
            report.block_summary[n] = {
                "mean": float(np.mean(vals)),
                "se": float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
                if len(vals) > 1 else 0.0,
            }
    return report


def _fold_seed(seed, *path) -> int:
    """Fold a derivation path into a single integer seed."""
    import hashlib
    msg = ":".join(str(p) for p in (seed, *path))
    return int.from_bytes(hashlib.sha256(msg.encode()).digest()[:8], "little")


def _sentinel_check(report, config, window, spec, ref_x, ref_u, n, rep) -> None:
    """Flag the replica when sentinel bands drift from the reference.

    The bands sit three quarters of the way through the padding, between the
    periodic wrap and the region of interest: any contamination entering
    through the wrap must sweep across a sentinel before it can reach a test
    function, while a correctly padded run never touches them.  The band is
    widened at small scales so particle noise stays below the threshold.
    """
    coords = window.coords()
    occ = config.occupancies
    a, b = spec.interest_interval()
    off_lo = 0.75 * (a - window.x_lo)
    off_hi = 0.75 * (window.x_hi - b)
    sup = max(spec.u0.max, 1e-9)
    band = max(0.25, 100.0 / n)
    for lo, hi in ((window.x_lo + off_lo, window.x_lo + off_lo + band),
                   (window.x_hi - off_hi - band, window.x_hi - off_hi)):
        sel = (coords >= lo) & (coords < hi)
        n_sites = int(np.sum(sel))
        if n_sites == 0:
            continue
        emp = float(np.mean(occ[sel]))
        ref_sel = (ref_x >= lo) & (ref_x < hi)
        ref = float(np.mean(ref_u[ref_sel]))
        tol = 0.25 * max(1.0, sup) + 3.0 * math.sqrt(sup * (1.0 + sup) / n_sites)
        if abs(emp - ref) > tol:
            report.sentinel_violations.append(
                {"scale": n, "replica": rep, "band": (lo, hi),
                 "empirical": emp, "reference": ref})


# ---------------------------------------------------------------------------
# Phase diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseDiagnostics:
    times: np.ndarray
    max_occupancy: np.ndarray
    decile_shares: np.ndarray  # (T, 10), slowest decile first

    @property
    def slow_decile_share(self) -> np.ndarray:
        return self.decile_shares[:, 0]

    def max_occupancy_trend(self) -> tuple[float, float]:
        """Kendall tau and p-value of the max-occupancy time trend."""
        tau, p = sstats.kendalltau(self.times, self.max_occupancy)
        return float(tau), float(p)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("time,max_occupancy,slow_decile_share\n")
            for t, m, s in zip(self.times, self.max_occupancy,
                               self.slow_decile_share):
                fh.write(f"{float(t)!r},{int(m)},{float(s)!r}\n")


def platoon_diagnostics(snapshots, field_: RateField) -> PhaseDiagnostics:
    """Mass share held by each alpha-decile and the running max occupancy."""
    if not snapshots:
        raise ValueError("need at least one snapshot")
    order = np.argsort(field_.alphas, kind="stable")
    L = field_.L
    decile_of = np.empty(L, dtype=np.int64)
    decile_of[order] = np.minimum(9, (np.arange(L) * 10) // L)
    times = np.array([t for t, _ in snapshots])
    maxima = np.array([int(np.max(occ)) for _, occ in snapshots])
    shares = np.zeros((len(snapshots), 10))
    for i, (_, occ) in enumerate(snapshots):
        total = float(np.sum(occ))
        if total > 0:
            for d in range(10):
                shares[i, d] = float(np.sum(occ[decile_of == d])) / total
    return PhaseDiagnostics(times=times, max_occupancy=maxima, decile_shares=shares)


# ---------------------------------------------------------------------------
# Empirical flux estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmpiricalFlux:
    densities: np.ndarray
    current: np.ndarray          # replica-mean ring current
    se: np.ndarray               # pooled over replicas
    replica_currents: np.ndarray  # (n_densities, replicas)
    stationary: np.ndarray       # drift test verdict per density
    model: str

    def concavity_violations(self) -> list[dict]:
        """Midpoint tests on interior grid points with pooled SEs."""
        out = []
        for i in range(1, len(self.densities) - 1):
            gap = self.current[i] - 0.5 * (self.current[i - 1] + self.current[i + 1])
            se = math.sqrt(self.se[i] ** 2 + 0.25 * self.se[i - 1] ** 2
                           + 0.25 * self.se[i + 1] ** 2)
            out.append({"rho": float(self.densities[i]), "gap": float(gap),
                        "se": se, "violation": bool(gap < -2.0 * se)})
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("rho,f,se\n")
            for r, f_, s in zip(self.densities, self.current, self.se):
                fh.write(f"{float(r)!r},{float(f_)!r},{float(s)!r}\n")


def _drift_pvalue(batch_means: np.ndarray) -> float:
    idx = np.arange(len(batch_means))
    if np.allclose(batch_means, batch_means[0]):
        return 1.0
    res = sstats.linregress(idx, batch_means)
    return float(res.pvalue)


def _repair_total(occ: np.ndarray, N: int, rng: np.random.Generator,
                  cap: int | None = None) -> np.ndarray:
    """Add/remove O(sqrt L) particles so the total is exactly N.

    Removal picks a uniformly random particle; addition a uniformly random
    site below the cap.  The perturbation is local and vanishing relative to
    the system size, so the repaired state stays near equilibrium.
    """
    occ = occ.copy()
    L = len(occ)
    excess = int(occ.sum()) - N
    while excess > 0:
        particles = np.repeat(np.arange(L), occ)
        drop = rng.choice(len(particles), size=min(excess, len(particles)),
                          replace=False)
        sites, counts = np.unique(particles[drop], return_counts=True)
        occ[sites] -= counts
        excess = int(occ.sum()) - N
    while excess < 0:
        x = int(rng.integers(L))
        if cap is None or occ[x] < cap:
            occ[x] += 1
            excess += 1
    return occ


def _equilibrium_start(model: str, law: DisorderLaw, field_: RateField,
                       rho: float, rate: RateFunction | None, K: int | None,
                       seed: int) -> Configuration:
    """Near-stationary initial state at exactly round(rho * L) particles.

    Subcritical zero-range densities start from the quenched product measure
    at the matching fugacity (repaired to the exact count); supercritical
    densities, where no equilibrium exists, and capped models start from a
    product/binomial sample instead.
    """
    from .equilibria import critical_density, flux_f

    L = field_.L
    N = int(round(rho * L))
    rng = philox(seed, "flux-init")
    if model == "zrp":
        if rho <= 0.0:
            return configuration_at_density(L, rho)
        rho_star = critical_density(law, rate)
        if rho < rho_star * 0.98:
            phi = flux_f(rho, law, rate)
            qlaw = QuenchedProductLaw(phi, field_, rate)
            occ = sample_product_measure(qlaw, _fold_seed(seed, "flux-init-pm"))
            return Configuration(_repair_total(occ, N, rng))
        return configuration_at_density(L, rho)
    occ = rng.binomial(K, min(rho / K, 1.0), L).astype(np.int64)
    return Configuration(_repair_total(occ, N, rng, cap=K), cap=K)


def estimate_flux_empirical(model: str, law: DisorderLaw, densities, L: int,
                            horizon: float, replicas: int, seed: int,
                            rate: RateFunction | None = None,
                            K: int | None = None,
                            burn_in: float | None = None,
                            n_batches: int = 20,
                            mode: str = "bond") -> EmpiricalFlux:
    """Stationary current per density with a standard error.

    Starts from a deterministic near-flat configuration at the exact density,
    burns in (default one third of the horizon), then measures over 20 equal
    batches; a linear batch-mean drift test below p = 0.05 flags the density
    as not stationary.  mode "bond" counts crossings of one designated bond
    (short-ranged autocorrelation, honest batch SE); mode "ring" averages over
    all bonds (smallest variance, SE only honest when pooled over replicas).
    With replicas > 1 the reported SE pools the independent replica currents;
    a single replica falls back to the batch-means SE.
    """
    densities = np.asarray(densities, float)
    if model == "zrp":
        if rate is None:
            raise ValueError("zrp flux estimation needs the rate function")
        if np.any(densities < 0):
            raise ValueError("densities must be nonnegative")
    elif model == "kexclusion":
        if K is None:
            raise ValueError("kexclusion flux estimation needs K")
        if np.any((densities < 0) | (densities > K)):
            raise ValueError("densities must lie in [0, K]")
    else:
        raise ValueError(f"unknown model {model!r}")
    if burn_in is None:
        burn_in = horizon / 3.0
    edges = np.linspace(burn_in, horizon, n_batches + 1)
    reps = np.empty((len(densities), replicas))
    batch_ses = np.empty((len(densities), replicas))
    stationary = np.ones(len(densities), dtype=bool)
    for i, rho in enumerate(densities):
        p_vals = []
        for rep in range(replicas):
            field_ = sample_rate_field(law, L, _fold_seed(seed, "flux-field", i, rep))
            run_seed = _fold_seed(seed, "flux-run", i, rep)
            init = _equilibrium_start(model, law, field_, float(rho), rate, K,
                                      _fold_seed(seed, "flux-start", i, rep))
            if model == "zrp":
                res = run_zrp(field_, TOTALLY_ASYMMETRIC, rate, init, horizon,
                              run_seed, checkpoint_times=edges)
            else:
                res = run_kexclusion(field_, K, init, horizon, run_seed,
                                     checkpoint_times=edges)
            cur, batch_se = measure_current(res.counter, burn_in, n_batches,
                                            mode=mode)
            keep = np.flatnonzero(res.counter.times >= burn_in - 1e-9)
            cum = (res.counter.right[keep] - res.counter.left[keep]
                   if mode == "bond" else res.counter.net_disp[keep] / float(L))
            batch = np.diff(cum) / np.diff(res.counter.times[keep])
            p_vals.append(_drift_pvalue(batch))
            reps[i, rep] = cur
            batch_ses[i, rep] = batch_se
        if min(p_vals) < 0.05 / max(1, replicas):  # Bonferroni across replicas
            stationary[i] = False
    mean = reps.mean(axis=1)
    if replicas > 1:
        se = reps.std(axis=1, ddof=1) / math.sqrt(replicas)
    else:
        se = batch_ses[:, 0]
    return EmpiricalFlux(densities=densities, current=mean, se=se,
                         replica_currents=reps, stationary=stationary,
                         model=model)


# ---------------------------------------------------------------------------
# Gap mapping
# ---------------------------------------------------------------------------

def gaps_to_zrp(positions, L: int) -> Configuration:
    """Occupancies eta(i) = number of empty sites ahead of particle i.

    positions: strictly increasing particle positions on a ring of L
    exclusion sites.  The total satisfies sum eta = L - N.
    """
    pos = np.asarray(positions, dtype=np.int64)
    if len(pos) < 1:
        raise ValueError("need at least one particle")
    if np.any((pos < 0) | (pos >= L)):
        raise ValueError("positions must lie in [0, L)")
    if np.any(np.diff(pos) <= 0):
        raise ValueError("positions must be strictly increasing")
    nxt = np.roll(pos, -1)
    gaps = (nxt - pos - 1) % L
    gaps[-1] = (pos[0] + L - pos[-1] - 1)
    return Configuration(gaps)


def positions_from_gaps(gaps: Configuration | np.ndarray, first_position: int,
                        L: int) -> np.ndarray:
    """Inverse of gaps_to_zrp given the anchor position of particle 0."""
    g = gaps.occupancies if isinstance(gaps, Configuration) else np.asarray(gaps)
    N = len(g)
    if int(np.sum(g)) + N != L:
        raise ValueError("gaps and ring size are inconsistent")
    steps = g[:-1] + 1
    pos = first_position + np.concatenate([[0], np.cumsum(steps)])
    return np.mod(pos, L)
