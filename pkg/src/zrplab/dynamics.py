"""Exact continuous-time dynamics on finite periodic lattices.

Two interchangeable engines realize the same Markov jump process: a direct
event-driven engine (aggregate-rate selection through a prefix-sum tree,
O(log L) per event) and a graphical-construction engine (per-site Poisson
clocks at the tail rate, uniform thresholds, random destinations, resolved
block by block over the finite interaction components).  A percolation
experiment over the induced interaction graph probes why the block
construction terminates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _engine
from .environment import JumpKernel, RateField, RateFunction
from .rng import philox

__all__ = [
    "Configuration",
    "CurrentCounter",
    "SimResult",
    "run_zrp",
    "run_kexclusion",
    "run_harris",
    "GraphicalSchedule",
    "generate_schedule",
    "measure_current",
    "InteractionGraph",
    "build_interaction_graph",
    "origin_component_samples",
    "path_tail_bound",
    "subcritical_block_length",
    "zero_configuration",
    "configuration_at_density",
    "snapshots_to_csv",
    "current_report",
]


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Configuration:
    """Occupancies eta(x) on an L-site ring, optionally capped at K."""

    occupancies: np.ndarray
    cap: int | None = None

    def __post_init__(self):
        occ = np.ascontiguousarray(self.occupancies, dtype=np.int64)
        if occ.ndim != 1 or len(occ) < 1:
            raise ValueError("occupancies must be a nonempty 1-d array")
        if np.any(occ < 0):
            raise ValueError("occupancies must be nonnegative")
        if self.cap is not None and np.any(occ > self.cap):
            raise ValueError(f"occupancies exceed the cap {self.cap}")
        occ.flags.writeable = False
        object.__setattr__(self, "occupancies", occ)

    @property
    def L(self) -> int:
        return len(self.occupancies)

    @property
    def total(self) -> int:
        return int(np.sum(self.occupancies))


def zero_configuration(L: int, cap: int | None = None) -> Configuration:
    return Configuration(np.zeros(L, dtype=np.int64), cap)


def configuration_at_density(L: int, rho: float, cap: int | None = None) -> Configuration:
    """Deterministic near-flat configuration with exactly round(rho * L) particles."""
    N = int(round(rho * L))
    base = N // L
    rem = N - base * L
    occ = np.full(L, base, dtype=np.int64)
    if rem > 0:
        idx = (np.arange(rem) * L) // rem
        occ[idx] += 1
    if cap is not None and np.any(occ > cap):
        raise ValueError("density too high for the cap")
    return Configuration(occ, cap)


# ---------------------------------------------------------------------------
# Current bookkeeping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurrentCounter:
    """Cumulative crossing counts recorded at checkpoint times.

    right/left count crossings of the designated bond (between sites bond and
    bond+1); net_disp accumulates signed displacements of every jump, so
    net_disp / (L * T) is the ring-averaged current.
    """

    bond: int
    L: int
    times: np.ndarray
    right: np.ndarray
    left: np.ndarray
    events: np.ndarray
    net_disp: np.ndarray

    @property
    def window(self) -> float:
        return float(self.times[-1] - self.times[0])

    def bond_crossings(self) -> int:
        return int(self.right[-1] - self.left[-1])


def measure_current(counter: CurrentCounter, burn_in: float,
                    n_batches: int = 20, mode: str = "bond") -> tuple[float, float]:
    """Point estimate and batch-means standard error of the current.

    mode "bond": net crossings of the designated bond per unit time;
    mode "ring": net displacement per site per unit time.
    """
    if n_batches < 2:
        raise ValueError("need at least 2 batches")
    t0 = counter.times[0] + burn_in
    keep = np.flatnonzero(counter.times >= t0 - 1e-12)
    if len(keep) < n_batches + 1:
        raise ValueError(
            f"window too short: {len(keep)} checkpoints after burn-in, "
            f"need {n_batches + 1}"
        )
    if mode == "bond":
        cum = counter.right[keep] - counter.left[keep]
        denom = 1.0
    elif mode == "ring":
        cum = counter.net_disp[keep]
        denom = float(counter.L)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    times = counter.times[keep]
    # group the checkpoint intervals into n_batches contiguous batches
    edges = np.linspace(0, len(keep) - 1, n_batches + 1).round().astype(int)
    bt = times[edges]
    bc = cum[edges].astype(float)
    widths = np.diff(bt)
    if np.any(widths <= 0.0):
        raise ValueError("checkpoint grid too coarse for the requested batches")
    batch_means = np.diff(bc) / widths / denom
    current = (bc[-1] - bc[0]) / (bt[-1] - bt[0]) / denom
    se = float(np.std(batch_means, ddof=1) / math.sqrt(n_batches))
    return float(current), se


def current_report(counter: CurrentCounter, burn_in: float,
                   n_batches: int = 20, mode: str = "bond") -> dict:
    current, se = measure_current(counter, burn_in, n_batches, mode)
    return {
        "bond": counter.bond,
        "burn_in": burn_in,
        "window": counter.window,
        "current": current,
        "se": se,
    }


# ---------------------------------------------------------------------------
# Event-driven engine
# ---------------------------------------------------------------------------

@dataclass
class SimResult:
    config: Configuration
    counter: CurrentCounter
    snapshots: list[tuple[float, np.ndarray]]


def _merge_boundaries(horizon, checkpoint_times, snapshot_times):
    pts = {float(horizon)}
    for t in (() if checkpoint_times is None else checkpoint_times):
        pts.add(float(t))
    for t in (() if snapshot_times is None else snapshot_times):
        pts.add(float(t))
    out = sorted(p for p in pts if 0.0 < p <= horizon + 1e-12)
    if not out or out[-1] < horizon:
        out.append(float(horizon))
    return out


def _run_engine(window_fn, window_args, eta, leaf, total, horizon, rng,
                bond, L, checkpoint_times, snapshot_times, needs_dest):
    tree = _engine._fenwick_build(leaf)
    counters = np.zeros(5, dtype=np.int64)
    t = 0.0
    boundaries = _merge_boundaries(horizon, checkpoint_times, snapshot_times)
    cp_set = {round(float(x), 12)
              for x in (() if checkpoint_times is None else checkpoint_times)}
    sn_set = {round(float(x), 12)
              for x in (() if snapshot_times is None else snapshot_times)}
    times = [0.0]
    right = [0]
    left = [0]
    events = [0]
    net = [0]
    snapshots = []
    if 0.0 in sn_set:
        snapshots.append((0.0, eta.copy()))
    for t_end in boundaries:
        while t < t_end:
            budget = int(min(_engine.CHUNK, max(64, 1.2 * total * (t_end - t) + 64)))
            u_time = rng.random(budget)
            u_site = rng.random(budget)
            u_dest = rng.random(budget) if needs_dest else u_time
            t, total, done = window_fn(
                *window_args(eta, leaf, tree, total, t, t_end, u_time, u_site, u_dest,
                             counters))
            if done:
                break
        key = round(float(t_end), 12)
        if key in cp_set or t_end == boundaries[-1]:
            times.append(t_end)
            right.append(int(counters[2]))
            left.append(int(counters[3]))
            events.append(int(counters[0]))
            net.append(int(counters[1]))
        if key in sn_set:
            snapshots.append((t_end, eta.copy()))
    counter = CurrentCounter(
        bond=bond, L=L,
        times=np.asarray(times), right=np.asarray(right), left=np.asarray(left),
        events=np.asarray(events), net_disp=np.asarray(net),
    )
    return counter, snapshots


def run_zrp(field: RateField, kernel: JumpKernel, rate: RateFunction,
            init: Configuration, horizon: float, seed: int, *,
            bond: int = 0, checkpoint_times=None, snapshot_times=None) -> SimResult:
    """Exact trajectory of the disordered zero-range process.

    Site x emits one particle at rate alpha_x * r(eta(x)); the destination is
    drawn from the kernel and wrapped periodically.  Deterministic in seed.
    """
    if init.L != field.L:
        raise ValueError("initial configuration and rate field disagree on L")
    if init.cap is not None:
        raise ValueError("zero-range configurations are uncapped")
    if not (math.isfinite(horizon) and horizon >= 0.0):
        raise ValueError(f"horizon must be finite and >= 0, got {horizon!r}")
    if kernel.range > field.L // 2:
        raise ValueError("kernel range exceeds L/2: periodic wrap ambiguous")
    eta = init.occupancies.copy()
    rtab = rate.as_array()
    alpha = field.alphas
    leaf = _engine.zrp_leaf_rates(eta, alpha, rtab)
    total = float(np.sum(leaf))
    disp = np.asarray(kernel.displacements, dtype=np.int64)
    pcum = np.cumsum(np.asarray(kernel.probabilities))
    rng = philox(seed, "zrp-run")
    n_before = int(np.sum(eta))

    def args(eta_, leaf_, tree_, total_, t_, t_end_, u1, u2, u3, counters_):
        return (eta_, alpha, rtab, leaf_, tree_, total_, t_, t_end_,
                disp, pcum, bond % field.L, u1, u2, u3, counters_)

    counter, snapshots = _run_engine(
        _engine.zrp_window, args, eta, leaf, total, horizon, rng,
        bond % field.L, field.L, checkpoint_times, snapshot_times,
        needs_dest=len(disp) > 1,
    )
    assert int(np.sum(eta)) == n_before, "particle count must be conserved"
    return SimResult(Configuration(eta), counter, snapshots)


def run_kexclusion(field: RateField, K: int, init: Configuration,
                   horizon: float, seed: int, *,
                   bond: int = 0, checkpoint_times=None,
                   snapshot_times=None) -> SimResult:
    """Exact trajectory of the totally asymmetric capped-exclusion process."""
    if init.L != field.L:
        raise ValueError("initial configuration and rate field disagree on L")
    if K < 1:
        raise ValueError("cap must be >= 1")
    if np.any(init.occupancies > K):
        raise ValueError("initial configuration violates the cap")
    if not (math.isfinite(horizon) and horizon >= 0.0):
        raise ValueError(f"horizon must be finite and >= 0, got {horizon!r}")
    eta = init.occupancies.copy()
    alpha = field.alphas
    leaf = _engine.kexclusion_leaf_rates(eta, alpha, K)
    total = float(np.sum(leaf))
    rng = philox(seed, "kexclusion-run")
    n_before = int(np.sum(eta))

    def args(eta_, leaf_, tree_, total_, t_, t_end_, u1, u2, u3, counters_):
        return (eta_, alpha, K, leaf_, tree_, total_, t_, t_end_,
                bond % field.L, u1, u2, counters_)

    counter, snapshots = _run_engine(
        _engine.kexclusion_window, args, eta, leaf, total, horizon, rng,
        bond % field.L, field.L, checkpoint_times, snapshot_times,
        needs_dest=False,
    )
    assert int(np.sum(eta)) == n_before
    assert np.all(eta >= 0) and np.all(eta <= K)
    return SimResult(Configuration(eta, cap=K), counter, snapshots)


# ---------------------------------------------------------------------------
# Graphical-construction engine
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GraphicalSchedule:
    """Per-site Poisson epochs on [0, t0] with thresholds and destinations.

    Epochs tick at the tail rate; thresholds are uniform on [0, tail rate], so
    accepting an epoch at site x exactly when U < alpha_x * r(eta(x-)) thins
    the clock down to the true jump rate.
    """

    t0: float
    r_inf: float
    site_offsets: np.ndarray  # (L+1,) into the flat epoch arrays
    times: np.ndarray
    thresholds: np.ndarray
    destinations: np.ndarray  # displacement per epoch

    @property
    def n_epochs(self) -> int:
        return len(self.times)

    def site_epochs(self, x: int) -> np.ndarray:
        return self.times[self.site_offsets[x]:self.site_offsets[x + 1]]


def generate_schedule(L: int, t0: float, r_inf: float, kernel: JumpKernel,
                      rng: np.random.Generator) -> GraphicalSchedule:
    counts = rng.poisson(r_inf * t0, L)
    total = int(np.sum(counts))
    offsets = np.zeros(L + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    times = np.empty(total)
    for x in range(L):
        lo, hi = offsets[x], offsets[x + 1]
        if hi > lo:
            times[lo:hi] = np.sort(rng.random(hi - lo) * t0)
    thresholds = rng.random(total) * r_inf
    disp = np.asarray(kernel.displacements, dtype=np.int64)
    pcum = np.cumsum(np.asarray(kernel.probabilities))
    destinations = disp[np.searchsorted(pcum, rng.random(total))]
    return GraphicalSchedule(t0, r_inf, offsets, times, thresholds, destinations)


class _UnionFind:
    """Union by size with path compression over integer site labels."""

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return int(root)

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


def _resolve_block(eta: np.ndarray, alpha: np.ndarray, rate: RateFunction,
                   sched: GraphicalSchedule, components: dict) -> None:
    """Apply one block of the construction, component by component."""
    L = len(eta)
    rtab = rate.as_array()
    kmax = len(rtab) - 1
    for sites in components.values():
        idx = np.concatenate([
            np.arange(sched.site_offsets[x], sched.site_offsets[x + 1])
            for x in sites
        ]) if sites else np.empty(0, dtype=np.int64)
        if len(idx) == 0:
            continue
        owner = np.concatenate([
            np.full(sched.site_offsets[x + 1] - sched.site_offsets[x], x, dtype=np.int64)
            for x in sites
        ])
        order = np.argsort(sched.times[idx], kind="stable")
        for j in order:
            e = idx[j]
            x = int(owner[j])
            k = int(eta[x])
            if k == 0:
                continue
            r_now = rtab[k if k < kmax else kmax]
            if sched.thresholds[e] < alpha[x] * r_now:
                y = (x + int(sched.destinations[e])) % L
                eta[x] -= 1
                eta[y] += 1


def _block_components(active: np.ndarray, nbhd_star: list[int]) -> dict:
    L = len(active)
    uf = _UnionFind(L)
    half = sorted({abs(d) for d in nbhd_star})
    for d in half:
        for x in range(L):
            y = (x + d) % L
            if active[x] or active[y]:
                uf.union(x, y)
    comps: dict[int, list[int]] = {}
    for x in range(L):
        comps.setdefault(uf.find(x), []).append(x)
    return comps


def run_harris(field: RateField, kernel: JumpKernel, rate: RateFunction,
               init: Configuration, blocks: int, t0: float, seed: int) -> Configuration:
    """Graphical-construction engine: blocks * t0 time units of dynamics.

    Each block draws a fresh schedule, builds the interaction graph over the
    block, and resolves each finite component's epochs in temporal order with
    threshold thinning.  On a finite ring every component is finite, so the
    construction always terminates; pathwise it realizes the same process as
    the event-driven engine.
    """
    if t0 <= 0.0 or blocks < 1:
        raise ValueError("need t0 > 0 and blocks >= 1")
    if init.L != field.L:
        raise ValueError("initial configuration and rate field disagree on L")
    eta = init.occupancies.copy()
    alpha = field.alphas
    nbhd_star = sorted(set(kernel.neighborhood) | {-d for d in kernel.neighborhood})
    for b in range(blocks):
        rng = philox(seed, "harris-block", b)
        sched = generate_schedule(field.L, t0, rate.r_inf, kernel, rng)
        active = np.diff(sched.site_offsets) > 0
        comps = _block_components(active, nbhd_star)
        _resolve_block(eta, alpha, rate, sched, comps)
    return Configuration(eta)


def harris_thinning_frequency(alpha_x: float, rate: RateFunction, occupancy: int,
                              t0: float, blocks: int, seed: int) -> tuple[float, int]:
    """Acceptance frequency of epochs at a site frozen at a given occupancy.

    Test hook for the thinning rule: the expected frequency is
    alpha_x * r(occupancy) / r_inf.
    """
    rng = philox(seed, "harris-probe")
    n = int(rng.poisson(rate.r_inf * t0 * blocks))
    u = rng.random(n) * rate.r_inf
    accepted = int(np.sum(u < alpha_x * rate(occupancy)))
    return (accepted / n if n else 0.0), n


def subcritical_block_length(kernel: JumpKernel, r_inf: float) -> float:
    """Largest t0 with K^2 (1 - exp(-2 r_inf t0)) = 1; blocks default to half."""
    nbhd_star = set(kernel.neighborhood) | {-d for d in kernel.neighborhood}
    K = len(nbhd_star)
    if K * K <= 1:
        return math.inf
    return math.log(K * K / (K * K - 1.0)) / (2.0 * r_inf)


def path_tail_bound(K: int, r_inf: float, t0: float, n: int) -> float:
    """Upper bound K^(2n-1) (1 - exp(-2 r_inf t0))^n on long self-avoiding paths."""
    return K ** (2 * n - 1) * (1.0 - math.exp(-2.0 * r_inf * t0)) ** n


# ---------------------------------------------------------------------------
# Interaction graph experiment
# ---------------------------------------------------------------------------

def _neighborhood_star(kernel_or_nbhd):
    if isinstance(kernel_or_nbhd, JumpKernel):
        nbhd = [(d,) for d in kernel_or_nbhd.neighborhood]
    else:
        nbhd = [tuple(d) if isinstance(d, (tuple, list)) else (int(d),)
                for d in kernel_or_nbhd]
    star = set(nbhd) | {tuple(-c for c in d) for d in nbhd}
    star.discard(tuple(0 for _ in next(iter(star))))
    return sorted(star)


@dataclass(frozen=True)
class InteractionGraph:
    """Connected components of the block-interaction graph on a finite lattice."""

    n_sites: int
    labels: np.ndarray
    component_sizes: np.ndarray   # size per component (root order)
    component_edges: np.ndarray   # edge count per component

    def size_histogram(self) -> tuple[np.ndarray, np.ndarray]:
        sizes, counts = np.unique(self.component_sizes, return_counts=True)
        return sizes, counts

    @property
    def max_component(self) -> int:
        return int(np.max(self.component_sizes))


def build_interaction_graph(kernel, t0: float, L, seed: int,
                            r_inf: float = 1.0) -> InteractionGraph:
    """Graph with an edge between x and y when x - y or y - x is a kernel
    displacement and at least one endpoint's clock ticks in [0, t0].

    L int: ring; L pair: torus (displacements must then be 2-d).
    """
    if t0 < 0.0:
        raise ValueError("t0 must be >= 0")
    star = _neighborhood_star(kernel)
    dim = len(star[0])
    if isinstance(L, (tuple, list)):
        shape = tuple(int(v) for v in L)
    else:
        shape = (int(L),)
    if len(shape) != dim:
        raise ValueError(f"lattice dimension {len(shape)} != displacement dimension {dim}")
    n = int(np.prod(shape))
    rng = philox(seed, "interaction-graph")
    p_active = 1.0 - math.exp(-r_inf * t0)
    active = rng.random(n) < p_active
    # half of the symmetric neighborhood, to walk each undirected edge once
    half = [d for d in star if d > tuple(0 for _ in d)]
    uf = _UnionFind(n)
    coords = np.unravel_index(np.arange(n), shape)
    edge_ends = []
    for d in half:
        nb = tuple((coords[k] + d[k]) % shape[k] for k in range(dim))
        nb_idx = np.ravel_multi_index(nb, shape)
        present = active | active[nb_idx]
        for x in np.flatnonzero(present):
            uf.union(int(x), int(nb_idx[x]))
        edge_ends.append((np.flatnonzero(present), nb_idx))
    labels = np.array([uf.find(x) for x in range(n)], dtype=np.int64)
    roots, inverse = np.unique(labels, return_inverse=True)
    sizes = np.bincount(inverse, minlength=len(roots))
    edges = np.zeros(len(roots), dtype=np.int64)
    for xs, _nb in edge_ends:
        np.add.at(edges, inverse[xs], 1)
    return InteractionGraph(n_sites=n, labels=labels,
                            component_sizes=sizes, component_edges=edges)


def origin_component_samples(kernel, t0: float, L, n_samples: int, seed: int,
                             r_inf: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Sizes and edge counts of the origin's component, sampled lazily.

    Only the sites reachable from the origin are ever examined, so large
    lattices cost no more than the components themselves.
    """
    star = _neighborhood_star(kernel)
    dim = len(star[0])
    shape = tuple(int(v) for v in L) if isinstance(L, (tuple, list)) else (int(L),)
    if len(shape) != dim:
        raise ValueError("lattice / displacement dimension mismatch")
    p_active = 1.0 - math.exp(-r_inf * t0)
    rng = philox(seed, "origin-component")
    origin = tuple(0 for _ in range(dim))
    sizes = np.empty(n_samples, dtype=np.int64)
    edges = np.empty(n_samples, dtype=np.int64)
    for s in range(n_samples):
        flags: dict[tuple, bool] = {}

        def is_active(site):
            got = flags.get(site)
            if got is None:
                got = bool(rng.random() < p_active)
                flags[site] = got
            return got

        component = {origin}
        frontier = [origin]
        n_edges = 0
        seen_edges = set()
        while frontier:
            u = frontier.pop()
            for d in star:
                v = tuple((u[k] + d[k]) % shape[k] for k in range(dim))
                if v == u:
                    continue
                key = (u, v) if u < v else (v, u)
                if key in seen_edges:
                    continue
                if is_active(u) or is_active(v):
                    seen_edges.add(key)
                    n_edges += 1
                    if v not in component:
                        component.add(v)
                        frontier.append(v)
        sizes[s] = len(component)
        edges[s] = n_edges
    return sizes, edges


# ---------------------------------------------------------------------------
# Export helpers
# ---------------------------------------------------------------------------

def snapshots_to_csv(snapshots, path) -> None:
    """CSV rows (time, site_index, occupancy) for every snapshot."""
    with open(path, "w", newline="") as fh:
        fh.write("time,site_index,occupancy\n")
        for t, occ in snapshots:
            for i, k in enumerate(occ):
                fh.write(f"{float(t)!r},{i},{int(k)}\n")


def components_to_csv(graph: InteractionGraph, path) -> None:
    sizes, counts = graph.size_histogram()
    with open(path, "w", newline="") as fh:
        fh.write("size,count\n")
        for s, c in zip(sizes, counts):
            fh.write(f"{int(s)},{int(c)}\n")
