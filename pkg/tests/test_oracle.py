import math

import numpy as np
import pytest

from zrplab.environment import (
    JumpKernel,
    RateField,
    UniformInterval,
    capped_linear_rate,
    delta_law,
    indicator_rate,
    sample_rate_field,
)
from zrplab.oracle import (
    build_generator,
    build_generator_pair,
    duality_scale,
    enumerate_sector,
    exact_stationary_current,
    run_verification_suite,
    sector_measure,
    sector_size_capped,
    sector_size_zrp,
    stationarity_via_unit_dual,
    uniform_sector_measure,
    verify_duality,
    verify_stationarity,
)

GEO = indicator_rate()
TA = JumpKernel((1,), (1.0,))
MIXED = JumpKernel((1, -1), (2 / 3, 1 / 3))


def make_field(alphas):
    alphas = np.asarray(alphas, float)
    return RateField(law=UniformInterval(0.5), L=len(alphas), seed=0, alphas=alphas)


class TestEnumeration:
    def test_empty_sector(self):
        assert enumerate_sector(3, 0).size == 1

    def test_stars_and_bars(self):
        assert enumerate_sector(3, 2).size == 6

    def test_capped(self):
        assert enumerate_sector(3, 2, cap=1).size == 3

    def test_random_counts_match_closed_forms(self, rng):
        for _ in range(10):
            L = int(rng.integers(1, 6))
            N = int(rng.integers(0, 5))
            assert enumerate_sector(L, N).size == sector_size_zrp(L, N)
            cap = int(rng.integers(1, 4))
            if N <= L * cap:
                assert enumerate_sector(L, N, cap=cap).size == \
                    sector_size_capped(L, N, cap)

    def test_lexicographic_and_duplicate_free(self):
        sec = enumerate_sector(4, 3)
        tuples = [tuple(s) for s in sec.states]
        assert tuples == sorted(tuples)
        assert len(set(tuples)) == len(tuples)

    def test_infeasible_rejected(self):
        with pytest.raises(ValueError):
            enumerate_sector(3, 7, cap=2)


class TestGenerator:
    def test_single_state_sector(self):
        field = make_field([0.7, 0.9, 1.0])
        sec = enumerate_sector(3, 0)
        G = build_generator(field, TA, sec, rate=GEO)
        assert G.shape == (1, 1) and G[0, 0] == 0.0

    def test_row_sums_vanish(self):
        field = make_field([0.6, 0.8, 1.0, 0.9])
        sec = enumerate_sector(4, 3)
        for kernel in (TA, MIXED):
            G = build_generator(field, kernel, sec, rate=capped_linear_rate(2))
            assert np.max(np.abs(G.sum(axis=1))) < 1e-14

    def test_hand_computed_entry(self):
        field = make_field([0.6, 0.8, 1.0])
        sec = enumerate_sector(3, 2)
        G = build_generator(field, TA, sec, rate=GEO)
        i = sec.state_index((2, 0, 0))
        j = sec.state_index((1, 1, 0))
        assert G[i, j] == pytest.approx(0.6, abs=1e-15)

    def test_wide_kernel_rejected(self):
        field = make_field([0.6, 0.8, 1.0])
        sec = enumerate_sector(3, 1)
        with pytest.raises(ValueError):
            build_generator(field, JumpKernel((2,), (1.0,)), sec, rate=GEO)


class TestStationarity:
    def test_product_measure_is_stationary(self):
        field = make_field([0.6, 0.8, 1.0])
        sec = enumerate_sector(3, 2)
        G = build_generator(field, TA, sec, rate=GEO)
        pi = sector_measure(field, GEO, sec)
        assert verify_stationarity(pi, G) < 1e-12

    def test_uniform_measure_for_homogeneous_exclusion(self):
        field = make_field(np.ones(4))
        sec = enumerate_sector(4, 2, cap=1)
        G = build_generator(field, None, sec, cap=1)
        assert verify_stationarity(uniform_sector_measure(sec), G) < 1e-12

    def test_perturbed_measure_fails(self):
        field = make_field([0.6, 0.8, 1.0])
        sec = enumerate_sector(3, 2)
        G = build_generator(field, TA, sec, rate=GEO)
        pi = sector_measure(field, GEO, sec).copy()
        pi[0] *= 1.01
        pi /= pi.sum()
        assert verify_stationarity(pi, G) > 1e-4


class TestDuality:
    def test_random_pairs(self, rng):
        field = make_field([0.55, 0.7, 0.85, 1.0])
        sec = enumerate_sector(4, 3)
        G, Gd = build_generator_pair(field, MIXED, sec, GEO)
        pi = sector_measure(field, GEO, sec)
        for _ in range(100):
            f = rng.standard_normal(sec.size)
            g = rng.standard_normal(sec.size)
            disc = verify_duality(f, g, pi, G, Gd)
            assert disc < 1e-10 * duality_scale(f, g, G)

    def test_unit_dual_reduction_matches_residual(self):
        field = make_field([0.55, 0.7, 0.85, 1.0])
        sec = enumerate_sector(4, 3)
        G, Gd = build_generator_pair(field, MIXED, sec, GEO)
        pi = sector_measure(field, GEO, sec)
        residual = verify_stationarity(pi, G)
        reduced = stationarity_via_unit_dual(pi, G, Gd)
        assert abs(residual - reduced) < 1e-12

    def test_symmetric_kernel_self_dual(self, rng):
        field = make_field([0.6, 0.75, 0.9, 1.0])
        sec = enumerate_sector(4, 2)
        sym = JumpKernel((1, -1), (0.5, 0.5))
        G, Gd = build_generator_pair(field, sym, sec, GEO)
        assert np.max(np.abs(G - Gd)) == 0.0
        f = rng.standard_normal(sec.size)
        pi = sector_measure(field, GEO, sec)
        assert verify_duality(f, f, pi, G, Gd) < 1e-12 * duality_scale(f, f, G)

    def test_weighted_transpose_identity(self):
        field = make_field([0.55, 0.7, 0.85, 1.0])
        sec = enumerate_sector(4, 3)
        G, Gd = build_generator_pair(field, MIXED, sec, GEO)
        pi = sector_measure(field, GEO, sec)
        D = np.diag(pi)
        assert np.max(np.abs(D @ Gd - G.T @ D)) < 1e-12


class TestExactCurrent:
    def test_empty_sector(self):
        field = make_field([0.7, 0.9, 1.0])
        sec = enumerate_sector(3, 0)
        G = build_generator(field, TA, sec, rate=GEO)
        pi = sector_measure(field, GEO, sec)
        assert exact_stationary_current(sec, G, pi, 0, field, TA, rate=GEO) == 0.0

    def test_homogeneous_exclusion_ring(self):
        field = make_field(np.ones(6))
        sec = enumerate_sector(6, 3, cap=1)
        G = build_generator(field, None, sec, cap=1)
        pi = uniform_sector_measure(sec)
        cur = exact_stationary_current(sec, G, pi, 0, field, cap=1)
        assert cur == pytest.approx(0.5 * 0.5 * 6 / 5, abs=1e-12)

    def test_bond_independence_for_zrp(self):
        # stationarity makes the current the same across every bond
        field = make_field([0.6, 0.8, 1.0])
        sec = enumerate_sector(3, 2)
        G = build_generator(field, TA, sec, rate=GEO)
        pi = sector_measure(field, GEO, sec)
        currents = [exact_stationary_current(sec, G, pi, b, field, TA, rate=GEO)
                    for b in range(3)]
        assert np.ptp(currents) < 1e-12


class TestSuite:
    def test_randomized_cases_pass(self):
        records = run_verification_suite(seed=314, n_cases=10, n_pairs=25)
        assert len(records) == 10
        assert all(r["pass"] for r in records)
        assert all(abs(r["residual"] - r["residual_unit_dual"]) < 1e-12
                   for r in records)
