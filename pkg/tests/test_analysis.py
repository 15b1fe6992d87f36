import math

import numpy as np
import pytest

from mechsched.analysis import (
    SimulationConfig,
    conditional_expected_sc_k,
    conditional_sc_k_monte_carlo,
    convergence_sweep,
    dominance_probe,
    draw_costs,
    estimate_average_ratio,
    improved_bound_check,
    conditional_sc_k_bounds,
    lemma2_bounds,
    prior_mass_multiple,
    read_sweep_csv,
    theoretical_limit,
    trial_ratios,
    truthfulness_probe,
    worst_case_probe,
    write_sweep_csv,
)
from mechsched.core import MechSchedError
from mechsched.distributions import DistributionSpec, RandomStream, cdf
from mechsched.mechanisms import allocate_k, allocate_p

PARETO = DistributionSpec.pareto(1.0, 2.0)
EXPO = DistributionSpec.exponential(1.0, 2.0)
UNIF = DistributionSpec.uniform(1.0, 3.0)


def pareto_exact(n):
    return 1.5 * (1 - (1 - 3.0**-n) / (2 * n))


def cfg(n, specs=(PARETO,), trials=200, seed=3, mech="k"):
    return SimulationConfig(n=n, specs=specs, trials=trials, master_seed=seed, mechanism=mech)


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(n=0), dict(trials=0), dict(specs=()), dict(seed=-1), dict(mech="x"), dict(n=2.5)],
    )
    def test_invalid(self, kwargs):
        base = dict(n=3, specs=(PARETO,), trials=10, seed=0, mech="k")
        base.update(kwargs)
        with pytest.raises(MechSchedError):
            cfg(**base)

    def test_m(self):
        assert cfg(3, specs=[PARETO, EXPO]).m == 2


class TestDraws:
    def test_shape_and_support(self):
        c = draw_costs(cfg(4, specs=(PARETO, UNIF)), 0, 7)
        assert c.shape == (7, 2, 4)
        assert np.all(c[:, 1] <= 3.0) and np.all(c >= 1.0)

    def test_chunk_independent(self):
        c = cfg(5, trials=20)
        np.testing.assert_array_equal(draw_costs(c, 0, 20)[13:17], draw_costs(c, 13, 17))


class TestRatio:
    def test_single_machine_is_one(self):
        est = estimate_average_ratio(cfg(1, specs=(PARETO, EXPO), trials=500))
        assert est.mean == 1.0 and est.std_error == 0.0

    def test_opt_is_one(self):
        est = estimate_average_ratio(cfg(20, trials=300, mech="opt"))
        assert est.mean == 1.0 and est.std_error == 0.0

    def test_pathwise_at_least_one(self):
        for mech in ("k", "p"):
            assert trial_ratios(cfg(30, specs=(PARETO, EXPO), mech=mech)).min() >= 1 - 1e-12

    def test_k_below_p_on_shared_draws(self):
        k = trial_ratios(cfg(25, mech="k"))
        p = trial_ratios(cfg(25, mech="p"))
        assert np.all(k <= p + 1e-12)

    def test_ratio_of_sums_by_hand(self):
        c = cfg(6, specs=(PARETO, UNIF), trials=5)
        costs = draw_costs(c, 0, 5)
        r = trial_ratios(c)
        for b in range(5):
            sc = sum(allocate_k(costs[b, j]) @ costs[b, j] for j in range(2))
            assert r[b] == pytest.approx(sc / costs[b].min(axis=1).sum(), rel=1e-13)

    def test_p_ratio_by_hand(self):
        c = cfg(6, trials=4, mech="p")
        costs = draw_costs(c, 0, 4)
        for b, r in enumerate(trial_ratios(c)):
            t = costs[b, 0]
            assert r == pytest.approx((allocate_p(t) @ t) / t.min(), rel=1e-13)

    def test_reproducible(self):
        assert estimate_average_ratio(cfg(40)) == estimate_average_ratio(cfg(40))

    def test_seed_matters(self):
        assert estimate_average_ratio(cfg(40, seed=1)).mean != estimate_average_ratio(cfg(40, seed=2)).mean

    @pytest.mark.slow
    def test_pareto_large_n_exact_finite_value(self):
        # mu_s = 2/3 for every s, so E[ratio_K] = 1.5 (1 - (1 - 3^-n) / (2n)) exactly;
        # the large-n constant 1.5 is approached from below at rate 1/n.
        est = estimate_average_ratio(cfg(1000, trials=10_000, seed=42))
        assert 1.47 <= est.mean <= 1.53
        assert abs(est.mean - pareto_exact(1000)) <= 4 * est.std_error

    def test_pareto_small_n_exact_finite_value(self):
        est = estimate_average_ratio(cfg(4, trials=100_000, seed=8))
        assert abs(est.mean - pareto_exact(4)) <= 4 * est.std_error


class TestLimit:
    def test_pareto(self):
        assert theoretical_limit([PARETO]) == pytest.approx(1.5, abs=1e-15)

    def test_published_constants(self):
        assert theoretical_limit([DistributionSpec.pareto(1, math.log(5, 4))]) == pytest.approx(1.861, abs=1e-3)
        assert theoretical_limit([EXPO]) == pytest.approx(1.384, abs=1e-3)

    def test_scale_free(self):
        assert theoretical_limit([DistributionSpec.exponential(5.0, 0.4)]) == pytest.approx(
            theoretical_limit([EXPO]), rel=1e-13
        )

    def test_multi_pareto(self):
        specs = [DistributionSpec.pareto(1, 2), DistributionSpec.pareto(3, 0.5), DistributionSpec.pareto(0.2, 4)]
        want = 1 + sum(s.t_min / s.shape for s in specs) / sum(s.t_min for s in specs)
        assert theoretical_limit(specs) == pytest.approx(want, rel=1e-14)

    def test_uniform(self):
        # 1 / E[1/t] = (b - a) / ln(b / a)
        assert theoretical_limit([UNIF]) == pytest.approx(2 / math.log(3), rel=1e-9)

    def test_empty(self):
        with pytest.raises(MechSchedError):
            theoretical_limit([])


class TestConditional:
    def test_single_machine(self):
        assert conditional_expected_sc_k(2.0, 0.3, 1) == pytest.approx(2.0, rel=1e-15)

    def test_mu_one(self):
        assert conditional_expected_sc_k(2.0, 1.0, 7) == 2.0

    def test_large_n(self):
        assert conditional_expected_sc_k(1.5, 0.4, 10**9) == pytest.approx(1.5 / 0.4, rel=1e-8)

    def test_two_machines_closed_form(self):
        # n = 2 directly: p = (1 - r/2, r/2) with r = s/t, so SC = s (3 - r) / 2
        s, mu = 1.7, 0.25
        assert conditional_expected_sc_k(s, mu, 2) == pytest.approx(s * (3 - mu) / 2, rel=1e-14)

    def test_bounds_alias(self):
        assert lemma2_bounds is conditional_sc_k_bounds

    def test_bounds_example(self):
        assert conditional_sc_k_bounds(1.0, 0.5, 10) == pytest.approx((1.6, 2.0), rel=1e-15)

    @pytest.mark.parametrize("mu", [0.1, 0.37, 0.9])
    @pytest.mark.parametrize("n", [1, 2, 5, 50, 1000])
    def test_sandwich(self, mu, n):
        lo, hi = conditional_sc_k_bounds(1.3, mu, n)
        v = conditional_expected_sc_k(1.3, mu, n)
        assert lo - 1e-12 <= v <= hi + 1e-12
        assert hi - lo == pytest.approx(1.3 / (n * mu * mu), rel=1e-12)

    @pytest.mark.parametrize("bad", [(0, 0.5, 2), (1, 0, 2), (1, 1.2, 2), (1, 0.5, 0)])
    def test_invalid(self, bad):
        with pytest.raises(MechSchedError):
            conditional_expected_sc_k(*bad)

    @pytest.mark.parametrize("spec, s", [(PARETO, 1.5), (EXPO, 1.0), (UNIF, 1.2)])
    def test_monte_carlo(self, spec, s):
        from mechsched.distributions import mu_s

        mean, se = conditional_sc_k_monte_carlo(spec, s, 8, 40_000, seed=4)
        assert abs(mean - conditional_expected_sc_k(s, mu_s(spec, s), 8)) <= 4 * se

    def test_monte_carlo_single(self):
        assert conditional_sc_k_monte_carlo(PARETO, 2.0, 1, 10, 0) == (2.0, 0.0)


class TestSweep:
    def test_rows_and_limit(self, tmp_path):
        rows = convergence_sweep(cfg(1, trials=300), [20, 1, 5, 5])
        assert [r.n for r in rows] == [1, 5, 20]
        assert {r.limit for r in rows} == {1.5}
        assert rows[0].mean_k == rows[0].mean_p == 1.0
        for r in rows[1:]:
            assert r.mean_k <= r.mean_p

        path = tmp_path / "sweep.csv"
        write_sweep_csv(rows, path)
        assert path.read_text().splitlines()[0] == "n,mean_k,se_k,mean_p,se_p,limit"
        assert read_sweep_csv(path) == rows

    def test_empty(self):
        with pytest.raises(MechSchedError):
            convergence_sweep(cfg(1), [])

    def test_bad_header(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(MechSchedError):
            read_sweep_csv(path)


class TestBounds:
    def test_prior_mass_pareto(self):
        h = prior_mass_multiple(PARETO)
        assert h == pytest.approx(math.sqrt(12), abs=1e-8)
        assert cdf(PARETO, h) >= 11 / 12

    def test_prior_mass_uniform(self):
        assert prior_mass_multiple(UNIF) == pytest.approx(1 + 2 * 11 / 12, abs=1e-8)

    @pytest.mark.parametrize("spec", [PARETO, EXPO, UNIF])
    def test_improvement(self, spec):
        b = improved_bound_check(spec)
        assert b.new_bound == b.limit
        assert b.new_bound <= 12 / 11 * b.h < b.prior_bound
        assert b.prior_bound == pytest.approx(2 * b.h + 1.33)

    def test_bad_mass(self):
        with pytest.raises(MechSchedError):
            prior_mass_multiple(PARETO, mass=1.0)


class TestProbes:
    def test_opt_probe_is_one(self):
        assert worst_case_probe("opt", 6, 100, RandomStream(0, 0)) == 1.0

    def test_two_machine_extremes(self):
        # on (1, M): K costs 1.5 - 1/(2M), P costs 2M / (M + 1)
        M = 1e6
        assert worst_case_probe("k", 2, 10, RandomStream(1, 0)) == pytest.approx(1.5 - 1 / (2 * M), rel=1e-12)
        assert worst_case_probe("p", 2, 10, RandomStream(1, 0)) == pytest.approx(2 * M / (M + 1), rel=1e-12)

    @pytest.mark.parametrize("n", [3, 8])
    def test_within_worst_case(self, n):
        assert worst_case_probe("k", n, 2000, RandomStream(2, n)) <= (n + 1) / 2 + 1e-6
        assert worst_case_probe("p", n, 2000, RandomStream(2, n)) <= n + 1e-6

    @pytest.mark.parametrize("mech", ["k", "p"])
    def test_truthfulness(self, mech):
        assert truthfulness_probe(mech, 4, 2, 200, 0) >= -1e-9

    def test_truthful_factor_one_is_zero(self):
        assert truthfulness_probe("k", 4, 2, 50, 0, factors=[1.0]) == 0.0

    def test_dominance(self):
        res = dominance_probe(12, 500, 1)
        assert np.all(res.sc_k <= res.sc_p + 1e-9) and res.threshold_ok.all()
