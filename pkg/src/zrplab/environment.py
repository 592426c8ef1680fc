"""Quenched disorder laws, rate fields, jump kernels and jump-rate functions.

These are the immutable ingredients every other module consumes: a disorder
law Q on (0,1] with left support endpoint c > 0, the quenched vector of site
rates alpha_x drawn from it, a finite-range jump kernel p(z), and the monotone
bounded rate function r(k) governing how fast occupied sites emit particles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .rng import philox

__all__ = [
    "FiniteSupport",
    "UniformInterval",
    "ShiftedBeta",
    "DisorderLaw",
    "delta_law",
    "JumpKernel",
    "RateFunction",
    "indicator_rate",
    "capped_linear_rate",
    "RateField",
    "sample_rate_field",
    "drift",
    "rate_field_to_csv",
    "rate_field_from_csv",
]


# ---------------------------------------------------------------------------
# Disorder laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteSupport:
    """Discrete law on finitely many rate values in (0, 1]."""

    values: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        weights = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)
        if len(values) == 0 or len(values) != len(weights):
            raise ValueError("support values and weights must be non-empty and equal length")
        if any(not (0.0 < v <= 1.0) for v in values):
            raise ValueError(f"support values must lie in (0, 1], got {values}")
        if any(w <= 0.0 for w in weights):
            raise ValueError("weights must be strictly positive")
        if abs(sum(weights) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {sum(weights)!r}")
        if len(set(values)) != len(values):
            raise ValueError("support values must be distinct")

    @property
    def c(self) -> float:
        return min(self.values)

    @property
    def is_continuous(self) -> bool:
        return False

    @property
    def has_atom_at_c(self) -> bool:
        # the minimum always carries positive weight by construction
        return True

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        vals = np.asarray(self.values)
        idx = rng.choice(len(vals), size=size, p=np.asarray(self.weights))
        return vals[idx]

    def expect(self, func) -> float:
        return float(sum(w * func(v) for v, w in zip(self.values, self.weights)))


@dataclass(frozen=True)
class UniformInterval:
    """Uniform law on [c, 1]."""

    c: float

    def __post_init__(self):
        if not (0.0 < self.c < 1.0):
            raise ValueError(f"left endpoint must satisfy 0 < c < 1, got {self.c!r}")

    @property
    def is_continuous(self) -> bool:
        return True

    @property
    def has_atom_at_c(self) -> bool:
        return False

    def pdf(self, a):
        a = np.asarray(a, float)
        return np.where((a >= self.c) & (a <= 1.0), 1.0 / (1.0 - self.c), 0.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.c, 1.0, size=size)

    def expect(self, func, *, epsrel: float = 1e-11) -> float:
        val, _ = integrate.quad(
            lambda a: func(a) / (1.0 - self.c), self.c, 1.0,
            epsabs=1e-13, epsrel=epsrel, limit=200,
        )
        return float(val)


@dataclass(frozen=True)
class ShiftedBeta:
    """alpha = c + (1-c) * B with B ~ Beta(a, b); support [c, 1]."""

    c: float
    a: float
    b: float

    def __post_init__(self):
        if not (0.0 < self.c < 1.0):
            raise ValueError(f"left endpoint must satisfy 0 < c < 1, got {self.c!r}")
        if self.a <= 0.0 or self.b <= 0.0:
            raise ValueError("shape parameters must be positive")

    @property
    def is_continuous(self) -> bool:
        return True

    @property
    def has_atom_at_c(self) -> bool:
        return False

    def pdf(self, a):
        a = np.asarray(a, float)
        width = 1.0 - self.c
        return stats.beta.pdf((a - self.c) / width, self.a, self.b) / width

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.c + (1.0 - self.c) * rng.beta(self.a, self.b, size=size)

    def expect(self, func, *, epsrel: float = 1e-11) -> float:
        # integrate in the Beta variable; the endpoint weight is handled by quad
        val, _ = integrate.quad(
            lambda u: func(self.c + (1.0 - self.c) * u) * stats.beta.pdf(u, self.a, self.b),
            0.0, 1.0, epsabs=1e-13, epsrel=epsrel, limit=200,
        )
        return float(val)


DisorderLaw = FiniteSupport | UniformInterval | ShiftedBeta


def delta_law(value: float = 1.0) -> FiniteSupport:
    """Degenerate (no-disorder) law concentrated at a single rate value."""
    return FiniteSupport((value,), (1.0,))


# ---------------------------------------------------------------------------
# Jump kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JumpKernel:
    """Finite-range translation-invariant jump distribution p(z) on the line."""

    displacements: tuple[int, ...]
    probabilities: tuple[float, ...]

    def __post_init__(self):
        disp = tuple(int(z) for z in self.displacements)
        probs = tuple(float(p) for p in self.probabilities)
        object.__setattr__(self, "displacements", disp)
        object.__setattr__(self, "probabilities", probs)
        if len(disp) == 0 or len(disp) != len(probs):
            raise ValueError("displacements and probabilities must be non-empty and equal length")
        if len(set(disp)) != len(disp):
            raise ValueError("displacements must be distinct")
        if any(z == 0 for z in disp):
            raise ValueError("zero displacement is not a jump")
        if any(p < 0.0 for p in probs):
            raise ValueError("probabilities must be nonnegative")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got {sum(probs)!r}")

    @property
    def drift(self) -> float:
        return float(sum(z * p for z, p in zip(self.displacements, self.probabilities)))

    @property
    def neighborhood(self) -> tuple[int, ...]:
        return tuple(z for z, p in zip(self.displacements, self.probabilities) if p > 0.0)

    @property
    def range(self) -> int:
        return max(abs(z) for z in self.neighborhood)

    @property
    def totally_asymmetric(self) -> bool:
        return self.neighborhood == (1,)

    def reversed(self) -> "JumpKernel":
        return JumpKernel(tuple(-z for z in self.displacements), self.probabilities)


TOTALLY_ASYMMETRIC = JumpKernel((1,), (1.0,))


def drift(kernel: JumpKernel) -> float:
    """Mean displacement per jump (lattice units)."""
    return kernel.drift


# ---------------------------------------------------------------------------
# Rate functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFunction:
    """Monotone bounded jump-rate table r(0..k_max) with tail value r_inf.

    Construction requires 0 = r(0) < r(1) <= ... <= r(k_max) = r_inf < inf,
    so queries above k_max legitimately return the tail value.
    """

    table: tuple[float, ...]
    r_inf: float

    def __post_init__(self):
        table = tuple(float(v) for v in self.table)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "r_inf", float(self.r_inf))
        if len(table) < 2:
            raise ValueError("rate table needs at least r(0) and r(1)")
        if table[0] != 0.0:
            raise ValueError("r(0) must be 0")
        if table[1] <= 0.0:
            raise ValueError("r(1) must be strictly positive")
        if any(table[k + 1] < table[k] for k in range(len(table) - 1)):
            raise ValueError("rate table must be nondecreasing")
        if not math.isfinite(self.r_inf):
            raise ValueError("tail rate must be finite")
        if table[-1] != self.r_inf:
            raise ValueError(
                "rate table must reach its tail value: "
                f"r(k_max)={table[-1]!r} != r_inf={self.r_inf!r}"
            )

    @property
    def k_max(self) -> int:
        return len(self.table) - 1

    @property
    def is_indicator(self) -> bool:
        return self.table == (0.0, 1.0) and self.r_inf == 1.0

    def __call__(self, k: int) -> float:
        return self.table[k] if k < len(self.table) else self.r_inf

    def as_array(self) -> np.ndarray:
        return np.asarray(self.table, float)


def indicator_rate() -> RateFunction:
    """r(k) = 1{k >= 1}: every occupied site serves at unit rate."""
    return RateFunction((0.0, 1.0), 1.0)


def capped_linear_rate(cap: int) -> RateFunction:
    """r(k) = min(k, cap)."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    return RateFunction(tuple(float(min(k, cap)) for k in range(cap + 1)), float(cap))


# ---------------------------------------------------------------------------
# Rate fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateField:
    """Quenched vector of site rates alpha_x in [c, 1] on an L-site ring."""

    law: DisorderLaw
    L: int
    seed: int
    alphas: np.ndarray = field(repr=False)

    def __post_init__(self):
        alphas = np.ascontiguousarray(self.alphas, dtype=float)
        c = self.law.c
        if alphas.shape != (self.L,):
            raise ValueError("alphas must have shape (L,)")
        if np.any(alphas < c - 1e-15) or np.any(alphas > 1.0 + 1e-15):
            raise ValueError("sampled rates must lie in [c, 1]")
        alphas.flags.writeable = False
        object.__setattr__(self, "alphas", alphas)

    @property
    def c(self) -> float:
        return self.law.c


def sample_rate_field(law: DisorderLaw, L: int, seed: int) -> RateField:
    """Draw L i.i.d. site rates from the law; deterministic in (law, L, seed)."""
    if L < 1:
        raise ValueError(f"lattice size must be >= 1, got {L}")
    rng = philox(seed, "rate-field", L)
    alphas = law.sample(rng, L)
    return RateField(law=law, L=int(L), seed=int(seed), alphas=alphas)


def rate_field_to_csv(field_: RateField, path) -> None:
    """Write (site_index, alpha) rows; repr round-trips floats exactly."""
    with open(path, "w", newline="") as fh:
        fh.write("site_index,alpha\n")
        for i, a in enumerate(field_.alphas):
            fh.write(f"{i},{float(a)!r}\n")


def rate_field_from_csv(path, law: DisorderLaw, seed: int = -1) -> RateField:
    """Rebuild a rate field from an exported CSV (exact reruns)."""
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "site_index,alpha":
            raise ValueError(f"unexpected header {header!r}")
        for line in fh:
            idx, a = line.strip().split(",")
            rows.append((int(idx), float(a)))
    rows.sort()
    alphas = np.array([a for _, a in rows], float)
    return RateField(law=law, L=len(alphas), seed=int(seed), alphas=alphas)
