"""Entropy solutions of u_t + (f(u))_x = 0 for concave tabulated fluxes.

Two independent routes to the same solution: the variational formula built on
the concave conjugate of the flux (sharp, no time stepping) and a first-order
Godunov finite-volume scheme (conservative, entropy-consistent).  Exact
Riemann solutions provide a third cross-check for step data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .equilibria import FluxTable

__all__ = [
    "Profile",
    "ConjugateTable",
    "SolutionField",
    "concave_conjugate",
    "biconjugate",
    "lax_oleinik_solve",
    "godunov_solve",
    "riemann_exact",
    "l1_distance",
]


# ---------------------------------------------------------------------------
# Initial profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    """Bounded initial density profile: piecewise constant or grid-sampled."""

    kind: str
    x: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, float)
        v = np.ascontiguousarray(self.values, float)
        if self.kind == "piecewise":
            if len(v) != len(x) + 1:
                raise ValueError("piecewise profile needs one more value than breakpoints")
            if len(x) > 1 and np.any(np.diff(x) <= 0):
                raise ValueError("breakpoints must increase")
        elif self.kind == "grid":
            if len(v) != len(x) or len(x) < 2:
                raise ValueError("grid profile needs matching x and values")
            if np.any(np.diff(x) <= 0):
                raise ValueError("grid must increase")
        else:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if np.any(v < 0.0):
            raise ValueError("densities must be nonnegative")
        x.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", v)

    @staticmethod
    def constant(v: float) -> "Profile":
        return Profile("piecewise", np.array([]), np.array([float(v)]))

    @staticmethod
    def step(x0: float, left: float, right: float) -> "Profile":
        return Profile("piecewise", np.array([float(x0)]),
                       np.array([float(left), float(right)]))

    @staticmethod
    def piecewise(breakpoints, values) -> "Profile":
        return Profile("piecewise", np.asarray(breakpoints, float),
                       np.asarray(values, float))

    @staticmethod
    def from_grid(x, values) -> "Profile":
        return Profile("grid", np.asarray(x, float), np.asarray(values, float))

    def __call__(self, x):
        x = np.asarray(x, float)
        if self.kind == "piecewise":
            idx = np.searchsorted(self.x, x, side="right")
            return self.values[idx]
        return np.interp(x, self.x, self.values)

    @property
    def max(self) -> float:
        return float(np.max(self.values))

    @property
    def min(self) -> float:
        return float(np.min(self.values))

    @property
    def is_two_piece_step(self) -> bool:
        return self.kind == "piecewise" and len(self.values) == 2


# ---------------------------------------------------------------------------
# Concave conjugate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConjugateTable:
    """f*(v) = inf_rho { v rho - f(rho) } sampled on a velocity grid."""

    v: np.ndarray
    values: np.ndarray
    rho_max: float

    def __call__(self, vel):
        return np.interp(vel, self.v, self.values)

    @property
    def v_min(self) -> float:
        return float(self.v[0])

    @property
    def v_max(self) -> float:
        return float(self.v[-1])


def _argmin_convex(g) -> int:
    """Index of a minimum of a convex sequence g(0..n-1) via ternary search."""
    lo, hi = 0, len(g) - 1
    while hi - lo > 8:
        m1 = lo + (hi - lo) // 3
        m2 = hi - (hi - lo) // 3
        if g[m1] < g[m2]:
            hi = m2
        else:
            lo = m1
    window = g[lo:hi + 1]
    return lo + int(np.argmin(window))


def concave_conjugate(flux: FluxTable, velocity_grid=None) -> ConjugateTable:
    """Tabulate the concave conjugate; rejects non-concave flux tables.

    Each velocity solves a unimodal (convex in rho) minimization over the flux
    grid by ternary search; the error is O(grid step).
    """
    if not flux.is_concave():
        raise ValueError("flux table fails the midpoint concavity test")
    if velocity_grid is None:
        lo, hi = flux.derivative_range()
        # the floor keeps degenerate (flat) fluxes workable: the sup then sits
        # in the interior of a genuine velocity window around zero
        pad = 0.1 * max(hi - lo, abs(hi), abs(lo), 1.0)
        velocity_grid = np.linspace(lo - pad, hi + pad, 2001)
    v = np.ascontiguousarray(velocity_grid, float)
    rho = flux.rho
    f = flux.f
    out = np.empty_like(v)
    for i, vel in enumerate(v):
        g = vel * rho - f
        out[i] = g[_argmin_convex(g)]
    return ConjugateTable(v, out, flux.rho_max)


def biconjugate(conj: ConjugateTable, rho_grid) -> np.ndarray:
    """f**(rho) = inf_v { v rho - f*(v) }; recovers a concave flux on its grid."""
    rho_grid = np.asarray(rho_grid, float)
    out = np.empty_like(rho_grid)
    for i, r in enumerate(rho_grid):
        g = r * conj.v - conj.values
        out[i] = g[_argmin_convex(g)]
    return out


# ---------------------------------------------------------------------------
# Solution fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolutionField:
    x: np.ndarray
    t: float
    u: np.ndarray
    potential: np.ndarray | None = None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("x,u\n")
            for xi, ui in zip(self.x, self.u):
                fh.write(f"{float(xi)!r},{float(ui)!r}\n")


def l1_distance(a: SolutionField, b: SolutionField) -> float:
    """L1 distance on the common grid (grids must match)."""
    if len(a.x) != len(b.x) or not np.allclose(a.x, b.x):
        raise ValueError("solution grids differ")
    dx = float(a.x[1] - a.x[0])
    return float(np.sum(np.abs(a.u - b.u)) * dx)


# ---------------------------------------------------------------------------
# Variational solver
# ---------------------------------------------------------------------------

def lax_oleinik_solve(u0: Profile, flux: FluxTable, x_grid, t: float,
                      conj: ConjugateTable | None = None) -> SolutionField:
    """Entropy solution via the variational formula.

    The potential U(x, t) = sup_y { U0(y) + t f*((x-y)/t) } is evaluated by a
    discrete sup over a y-window spanning the characteristic cone (the
    conjugate's velocity range, padded); U0 is the cumulative trapezoid
    integral of u0, and u = dU/dx by centered differences.
    """
    x = np.ascontiguousarray(x_grid, float)
    if len(x) < 3 or np.any(np.diff(x) <= 0):
        raise ValueError("need an increasing x grid with >= 3 points")
    dx = float(x[1] - x[0])
    if not np.allclose(np.diff(x), dx):
        raise ValueError("x grid must be uniform")
    if u0.max > flux.rho_max + 1e-12:
        raise ValueError("initial data exceeds the flux table domain")
    if t < 0.0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        return SolutionField(x, 0.0, np.asarray(u0(x), float))
    if conj is None:
        conj = concave_conjugate(flux)
    # y grid aligned with x, spanning the velocity cone but staying inside the
    # conjugate table (interp must never clamp, or flat edges look like growth)
    m_lo = math.ceil(t * conj.v_min / dx)
    m_hi = math.floor(t * conj.v_max / dx)
    if m_hi - m_lo < 2:
        raise ValueError("velocity range too narrow for this grid: refine dx")
    y_lo = x[0] - m_hi * dx
    y_hi = x[-1] - m_lo * dx
    n_left = int(round((x[0] - y_lo) / dx))
    n_right = int(round((y_hi - x[-1]) / dx))
    y = np.concatenate([
        x[0] + dx * np.arange(-n_left, 0),
        x,
        x[-1] + dx * np.arange(1, n_right + 1),
    ])
    uy = np.asarray(u0(y), float)
    U0 = np.concatenate([[0.0], np.cumsum(0.5 * (uy[1:] + uy[:-1]) * dx)])
    # candidate m: y_j = x_i - m dx  =>  j = (i + n_left) - m
    best = np.full(len(x), -np.inf)
    arg = np.zeros(len(x), dtype=np.int64)
    base = np.arange(len(x)) + n_left
    edge_cols = {}
    for m in range(m_lo, m_hi + 1):
        vel = m * dx / t
        cand = U0[base - m] + t * float(conj(vel))
        if m in (m_lo, m_lo + 1, m_hi - 1, m_hi):
            edge_cols[m] = cand
        better = cand > best
        best[better] = cand[better]
        arg[better] = m
    # ties may legitimately extend to the window edge (the conjugate is linear
    # outside the characteristic range); reject only when the sup is still
    # strictly growing at the boundary
    tie_tol = 1e-12 * max(1.0, float(np.max(np.abs(best))))
    grow_lo = (arg == m_lo) & (edge_cols[m_lo] > edge_cols[m_lo + 1] + tie_tol)
    grow_hi = (arg == m_hi) & (edge_cols[m_hi] > edge_cols[m_hi - 1] + tie_tol)
    if np.any(grow_lo) or np.any(grow_hi):
        raise ValueError("sup attained on the y-window boundary: enlarge the velocity range")
    U = best
    u = np.empty_like(U)
    u[1:-1] = (U[2:] - U[:-2]) / (2.0 * dx)
    u[0] = (U[1] - U[0]) / dx
    u[-1] = (U[-1] - U[-2]) / dx
    return SolutionField(x, float(t), u, potential=U)


# ---------------------------------------------------------------------------
# Godunov scheme
# ---------------------------------------------------------------------------

def _godunov_interface_flux(ul, ur, flux: FluxTable, rho_hat: float):
    """Exact interface flux for a concave flux: min of the endpoint values for
    increasing data, flux at the (clamped) maximizer for decreasing data."""
    fl = flux(ul)
    fr = flux(ur)
    up = np.minimum(fl, fr)
    hat = np.clip(rho_hat, np.minimum(ul, ur), np.maximum(ul, ur))
    down = flux(hat)
    return np.where(ul <= ur, up, down)


def godunov_solve(u0: Profile, flux: FluxTable, dx: float, cfl: float, t: float,
                  domain: tuple[float, float] = (-1.0, 1.0),
                  boundary: str = "outflow") -> SolutionField:
    """First-order Godunov solution at time t on cell centers.

    Time step cfl * dx / max|f'| with the derivative bound taken from table
    difference quotients; degenerate flat fluxes fall back to dt = cfl * dx.
    Boundaries: outflow (ghost cells copy the edge) or periodic.
    """
    if not (0.0 < cfl <= 1.0):
        raise ValueError("cfl must be in (0, 1]")
    if not flux.is_concave():
        raise ValueError("this Godunov kernel expects a concave flux table")
    a, b = domain
    n = int(round((b - a) / dx))
    x = a + (np.arange(n) + 0.5) * dx
    u = np.asarray(u0(x), float)
    if u.max() > flux.rho_max + 1e-12:
        raise ValueError("initial data exceeds the flux table domain")
    lo, hi = flux.derivative_range()
    speed = max(abs(lo), abs(hi))
    dt = cfl * dx / speed if speed > 0.0 else cfl * dx
    rho_hat = float(flux.rho[int(np.argmax(flux.f))])
    remaining = float(t)
    while remaining > 1e-15:
        step = min(dt, remaining)
        if boundary == "periodic":
            ul = u
            ur = np.roll(u, -1)
            F = _godunov_interface_flux(ul, ur, flux, rho_hat)
            u = u - (step / dx) * (F - np.roll(F, 1))
        elif boundary == "outflow":
            ue = np.concatenate([[u[0]], u, [u[-1]]])
            F = _godunov_interface_flux(ue[:-1], ue[1:], flux, rho_hat)
            u = u - (step / dx) * (F[1:] - F[:-1])
        else:
            raise ValueError(f"unknown boundary {boundary!r}")
        remaining -= step
    return SolutionField(x, float(t), u)


# ---------------------------------------------------------------------------
# Exact Riemann solutions
# ---------------------------------------------------------------------------

def riemann_exact(u_l: float, u_r: float, flux: FluxTable, x_over_t) -> np.ndarray:
    """Entropy solution of the Riemann problem for a concave flux.

    Increasing data jump as an admissible shock at the Rankine-Hugoniot speed;
    decreasing data open a rarefaction fan given by the generalized inverse of
    the (decreasing) flux derivative.
    """
    if not flux.is_concave():
        raise ValueError("riemann_exact expects a concave flux table")
    xi = np.asarray(x_over_t, float)
    if u_l == u_r:
        return np.full_like(xi, float(u_l))
    if u_l < u_r:
        s = (float(flux(u_r)) - float(flux(u_l))) / (u_r - u_l)
        return np.where(xi < s, u_l, u_r)
    # rarefaction: u(xi) = (f')^{-1}(xi) clipped to [u_r, u_l]
    rho = flux.rho
    mid = 0.5 * (rho[1:] + rho[:-1])
    slopes = np.diff(flux.f) / np.diff(rho)
    keep = (mid >= u_r - 1e-12) & (mid <= u_l + 1e-12)
    mid = mid[keep]
    slopes = slopes[keep]
    # slopes decrease in rho; np.interp needs increasing x
    order = np.argsort(slopes, kind="stable")
    u = np.interp(xi, slopes[order], mid[order])
    v_l = slopes[-1] if len(slopes) else 0.0   # slowest characteristic (at u_l)
    v_r = slopes[0] if len(slopes) else 0.0    # fastest characteristic (at u_r)
    u = np.where(xi <= v_l, u_l, u)
    u = np.where(xi >= v_r, u_r, u)
    return u


def riemann_solution_field(u_l: float, u_r: float, flux: FluxTable,
                           x_grid, t: float) -> SolutionField:
    x = np.asarray(x_grid, float)
    if t == 0.0:
        return SolutionField(x, 0.0, np.where(x < 0.0, u_l, u_r))
    return SolutionField(x, float(t), riemann_exact(u_l, u_r, flux, x / t))
