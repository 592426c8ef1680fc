import math

import numpy as np
import pytest
from scipy import stats

from zrplab.dynamics import (
    Configuration,
    build_interaction_graph,
    configuration_at_density,
    generate_schedule,
    harris_thinning_frequency,
    measure_current,
    origin_component_samples,
    path_tail_bound,
    run_harris,
    run_kexclusion,
    run_zrp,
    subcritical_block_length,
    zero_configuration,
)
from zrplab.environment import (
    JumpKernel,
    ShiftedBeta,
    TOTALLY_ASYMMETRIC,
    delta_law,
    indicator_rate,
    sample_rate_field,
)
from zrplab.equilibria import QuenchedProductLaw, sample_product_measure
from zrplab.rng import philox

GEO = indicator_rate()


class TestZrpEngine:
    def test_empty_initial_state_frozen(self):
        field = sample_rate_field(delta_law(1.0), 32, 1)
        res = run_zrp(field, TOTALLY_ASYMMETRIC, GEO, zero_configuration(32), 10.0, 2,
                      checkpoint_times=np.linspace(0.0, 10.0, 6))
        assert res.config.total == 0
        assert res.counter.events[-1] == 0
        cur, se = measure_current(res.counter, burn_in=0.0, n_batches=5)
        assert (cur, se) == (0.0, 0.0)

    def test_particle_conservation_exact(self):
        law = ShiftedBeta(0.5, 2, 1)
        field = sample_rate_field(law, 128, 3)
        init = configuration_at_density(128, 2.0)
        res = run_zrp(field, JumpKernel((1, -1), (2 / 3, 1 / 3)), GEO, init, 50.0, 4)
        assert res.config.total == init.total

    def test_single_particle_poisson_displacement(self):
        # one particle, unit rates, forward jumps: displacement ~ Poisson(t)
        t = 5.0
        field = sample_rate_field(delta_law(1.0), 256, 5)
        occ = np.zeros(256, dtype=np.int64)
        occ[0] = 1
        init = Configuration(occ)
        disp = [run_zrp(field, TOTALLY_ASYMMETRIC, GEO, init, t, 10_000 + r)
                .counter.net_disp[-1] for r in range(10_000)]
        disp = np.asarray(disp)
        kmax = 12
        counts = np.bincount(np.minimum(disp, kmax), minlength=kmax + 1)
        pmf = stats.poisson.pmf(np.arange(kmax), t)
        probs = np.append(pmf, 1.0 - pmf.sum())
        chi2 = stats.chisquare(counts, len(disp) * probs)
        assert chi2.pvalue > 0.01

    def test_stationary_current_disordered(self):
        # product-measure start: bond current matches the fugacity
        law = ShiftedBeta(0.5, 2, 1)
        field = sample_rate_field(law, 10_000, 42)
        qlaw = QuenchedProductLaw(0.4, field, GEO)
        init = Configuration(sample_product_measure(qlaw, 43))
        edges = np.linspace(0.0, 1000.0, 21)
        res = run_zrp(field, TOTALLY_ASYMMETRIC, GEO, init, 1000.0, 44,
                      checkpoint_times=edges)
        cur, se = measure_current(res.counter, burn_in=0.0, n_batches=20)
        assert abs(cur - 0.4) < 3.0 * se

    def test_determinism(self):
        law = ShiftedBeta(0.5, 2, 1)
        field = sample_rate_field(law, 64, 7)
        init = configuration_at_density(64, 1.0)
        a = run_zrp(field, TOTALLY_ASYMMETRIC, GEO, init, 20.0, 8)
        b = run_zrp(field, TOTALLY_ASYMMETRIC, GEO, init, 20.0, 8)
        assert np.array_equal(a.config.occupancies, b.config.occupancies)
        assert a.counter.events[-1] == b.counter.events[-1]

    def test_snapshots_at_exact_times(self):
        field = sample_rate_field(delta_law(1.0), 32, 1)
        init = configuration_at_density(32, 1.0)
        res = run_zrp(field, TOTALLY_ASYMMETRIC, GEO, init, 5.0, 2,
                      snapshot_times=[0.0, 2.5, 5.0])
        times = [t for t, _ in res.snapshots]
        assert times == [0.0, 2.5, 5.0]
        for _, occ in res.snapshots:
            assert occ.sum() == init.total

    def test_bad_inputs_rejected(self):
        field = sample_rate_field(delta_law(1.0), 16, 1)
        with pytest.raises(ValueError):
            run_zrp(field, TOTALLY_ASYMMETRIC, GEO, zero_configuration(8), 1.0, 1)
        with pytest.raises(ValueError):
            run_zrp(field, TOTALLY_ASYMMETRIC, GEO, zero_configuration(16),
                    math.inf, 1)


class TestKExclusionEngine:
    def test_fully_packed_ring_frozen(self):
        field = sample_rate_field(delta_law(1.0), 16, 1)
        init = Configuration(np.full(16, 2, dtype=np.int64), cap=2)
        res = run_kexclusion(field, 2, init, 10.0, 3)
        assert np.array_equal(res.config.occupancies, init.occupancies)
        assert res.counter.events[-1] == 0

    def test_homogeneous_ring_current(self):
        # uniform sector measure: current = rho (1 - rho) L / (L - 1)
        L, N = 1000, 500
        field = sample_rate_field(delta_law(1.0), L, 5)
        init = configuration_at_density(L, 0.5, cap=1)
        edges = np.linspace(100.0, 900.0, 21)
        res = run_kexclusion(field, 1, init, 900.0, 7, checkpoint_times=edges)
        cur, se = measure_current(res.counter, 100.0, 20, mode="bond")
        expect = 0.25 * L / (L - 1)
        assert abs(cur - expect) < 3.0 * se

    def test_single_particle_poisson(self):
        t = 5.0
        field = sample_rate_field(delta_law(1.0), 128, 9)
        occ = np.zeros(128, dtype=np.int64)
        occ[0] = 1
        init = Configuration(occ, cap=1)
        disp = [run_kexclusion(field, 1, init, t, 40_000 + r)
                .counter.net_disp[-1] for r in range(4000)]
        disp = np.asarray(disp)
        kmax = 12
        counts = np.bincount(np.minimum(disp, kmax), minlength=kmax + 1)
        pmf = stats.poisson.pmf(np.arange(kmax), t)
        probs = np.append(pmf, 1.0 - pmf.sum())
        assert stats.chisquare(counts, len(disp) * probs).pvalue > 0.01

    def test_cap_violation_rejected(self):
        field = sample_rate_field(delta_law(1.0), 8, 1)
        with pytest.raises(ValueError):
            run_kexclusion(field, 1, Configuration(np.full(8, 2)), 1.0, 2)

    def test_cap_respected_along_trajectory(self):
        law = ShiftedBeta(0.5, 2, 1)
        field = sample_rate_field(law, 64, 11)
        init = configuration_at_density(64, 1.5, cap=2)
        res = run_kexclusion(field, 2, init, 50.0, 12)
        assert res.config.occupancies.max() <= 2
        assert res.config.occupancies.min() >= 0
        assert res.config.total == init.total


class TestMeasureCurrent:
    def test_window_too_short(self):
        field = sample_rate_field(delta_law(1.0), 16, 1)
        res = run_zrp(field, TOTALLY_ASYMMETRIC, GEO,
                      configuration_at_density(16, 1.0), 5.0, 2)
        with pytest.raises(ValueError):
            measure_current(res.counter, 0.0, n_batches=20)

    def test_burn_in_respected(self):
        field = sample_rate_field(delta_law(1.0), 64, 1)
        edges = np.linspace(0.0, 100.0, 51)
        res = run_zrp(field, TOTALLY_ASYMMETRIC, GEO,
                      configuration_at_density(64, 1.0), 100.0, 2,
                      checkpoint_times=edges)
        cur, se = measure_current(res.counter, burn_in=50.0, n_batches=10)
        assert se > 0.0


class TestHarrisEngine:
    def test_empty_initial_state(self):
        law = ShiftedBeta(0.5, 2, 1)
        field = sample_rate_field(law, 32, 1)
        out = run_harris(field, TOTALLY_ASYMMETRIC, GEO, zero_configuration(32),
                         blocks=3, t0=0.5, seed=2)
        assert out.total == 0

    def test_schedule_epochs_increasing(self):
        rng = philox(7, "sched")
        sched = generate_schedule(64, 2.0, 1.0, TOTALLY_ASYMMETRIC, rng)
        for x in range(64):
            e = sched.site_epochs(x)
            assert np.all(np.diff(e) > 0)
            assert np.all((e >= 0) & (e <= 2.0))
        assert np.all((sched.thresholds >= 0) & (sched.thresholds <= 1.0))

    def test_first_accepted_epoch_exponential(self):
        # thinning a unit-rate clock at alpha r(1): first acceptance ~ Exp(alpha r(1))
        alpha, t0 = 0.7, 40.0
        times = []
        for rep in range(10_000):
            rng = philox(50_000 + rep, "first-epoch")
            sched = generate_schedule(1, t0, 1.0, TOTALLY_ASYMMETRIC, rng)
            e = sched.site_epochs(0)
            acc = e[sched.thresholds[:len(e)] < alpha * 1.0]
            if len(acc):
                times.append(acc[0])
        ks = stats.kstest(np.asarray(times), "expon", args=(0.0, 1.0 / alpha))
        assert ks.pvalue > 0.01

    def test_thinning_frequency(self):
        freq, n = harris_thinning_frequency(0.8, GEO, occupancy=3,
                                            t0=10.0, blocks=100, seed=3)
        p = 0.8 * 1.0 / 1.0
        se = math.sqrt(p * (1 - p) / n)
        assert abs(freq - p) < 3 * se

    def test_engine_agreement_chi_square(self):
        # both engines realize the same law: occupancy bins at one site, t = 5
        law = ShiftedBeta(0.5, 2, 1)
        n_rep = 10_000
        counts = np.zeros((2, 4), dtype=np.int64)
        for rep in range(n_rep):
            field = sample_rate_field(law, 64, 100_000 + rep)
            init = configuration_at_density(64, 1.0)
            a = run_zrp(field, TOTALLY_ASYMMETRIC, GEO, init, 5.0,
                        200_000 + rep)
            b = run_harris(field, TOTALLY_ASYMMETRIC, GEO, init,
                           blocks=10, t0=0.5, seed=300_000 + rep)
            counts[0, min(int(a.config.occupancies[0]), 3)] += 1
            counts[1, min(int(b.occupancies[0]), 3)] += 1
        res = stats.chi2_contingency(counts)
        assert res.pvalue > 0.01

    def test_stationarity_preserved(self):
        # product-measure marginals at time 0 and time T are indistinguishable
        law = ShiftedBeta(0.5, 2, 1)
        phi = 0.4
        before = []
        after = []
        for rep in range(2000):
            field = sample_rate_field(law, 64, 500_000 + rep)
            qlaw = QuenchedProductLaw(phi, field, GEO)
            occ = sample_product_measure(qlaw, 600_000 + rep)
            before.append(min(int(occ[0]), 3))
            res = run_zrp(field, TOTALLY_ASYMMETRIC, GEO, Configuration(occ),
                          4.0, 700_000 + rep)
            after.append(min(int(res.config.occupancies[0]), 3))
        table = np.array([np.bincount(before, minlength=4),
                          np.bincount(after, minlength=4)])
        assert stats.chi2_contingency(table).pvalue > 0.01


class TestInteractionGraph:
    def test_zero_time_all_singletons(self):
        g = build_interaction_graph(TOTALLY_ASYMMETRIC, 0.0, 500, 1)
        assert g.max_component == 1
        assert g.component_sizes.sum() == 500

    def test_subcritical_threshold_value(self):
        # K = 2 symmetric neighborhood, unit tail rate
        t0 = subcritical_block_length(TOTALLY_ASYMMETRIC, 1.0)
        assert t0 == pytest.approx(-0.5 * math.log(3 / 4), abs=1e-12)
        assert t0 == pytest.approx(0.14384, abs=5e-6)

    def test_tail_bound_holds_empirically(self):
        t0 = 0.1
        n_samples = 20_000
        sizes, edges = origin_component_samples(TOTALLY_ASYMMETRIC, t0, 10_000,
                                                n_samples, 77)
        for n in range(1, 8):
            hits = int(np.sum(edges >= 2 * n - 1))
            if hits < 100:
                break
            emp = hits / n_samples
            assert emp <= path_tail_bound(2, 1.0, t0, n)

    def test_mean_component_size_stable_in_L(self):
        s1, _ = origin_component_samples(TOTALLY_ASYMMETRIC, 0.1, 1000, 20_000, 5)
        s2, _ = origin_component_samples(TOTALLY_ASYMMETRIC, 0.1, 10_000, 20_000, 5)
        assert abs(s1.mean() - s2.mean()) / s2.mean() < 0.05

    def test_edges_only_within_symmetric_neighborhood(self):
        g = build_interaction_graph(JumpKernel((2,), (1.0,)), 5.0, 30, 3)
        # displacement 2 partitions the ring into even and odd sites
        labels = g.labels
        even = {labels[i] for i in range(0, 30, 2)}
        odd = {labels[i] for i in range(1, 30, 2)}
        assert even.isdisjoint(odd)

    def test_torus_graph_runs(self):
        g = build_interaction_graph([(1, 0), (0, 1)], 0.2, (20, 20), 9)
        assert g.component_sizes.sum() == 400

    def test_supercritical_giant_component(self):
        g = build_interaction_graph(TOTALLY_ASYMMETRIC, 3.0, 400, 11)
        assert g.max_component > 200
