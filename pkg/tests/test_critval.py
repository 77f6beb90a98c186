import numpy as np
import pytest

from cmitest.critval import (
    CriticalValue,
    CritvalCache,
    decide,
    default_cache,
    empirical_critval,
    quantile_se,
    simulate_lf_critval,
    simulate_lf_critvals,
    simulate_lf_draws,
)
from cmitest.errors import InvalidArgumentError, InvalidBandwidthError, SpecMismatchError
from cmitest.model import MissingDataDesign
from cmitest.stats import StatisticSpec, StatisticValue


class TestQuantile:
    def test_median_of_five(self):
        assert empirical_critval([0, 1, 2, 3, 4], 0.5) == 2

    def test_rank_convention(self):
        draws = np.arange(1, 101, dtype=float)
        # rank ceil(0.95 * 100) = 95
        assert empirical_critval(draws, 0.05) == 95.0
        assert empirical_critval(draws, 0.051) == 95.0

    def test_alpha_near_one(self):
        draws = np.concatenate([np.zeros(600), np.linspace(0.1, 1, 400)])
        assert empirical_critval(draws, 0.999) == 0.0

    def test_monotone_in_alpha(self):
        draws = np.random.default_rng(0).exponential(size=1000)
        vals = [empirical_critval(draws, a) for a in (0.01, 0.05, 0.1, 0.5)]
        assert vals == sorted(vals, reverse=True)

    def test_bad_alpha(self):
        with pytest.raises(InvalidArgumentError):
            empirical_critval([1.0], 1.0)

    def test_quantile_se_normal(self):
        draws = np.random.default_rng(1).normal(size=40_000)
        # asymptotic sd of the 0.95 quantile: sqrt(.95*.05/B)/phi(1.645)
        ref = np.sqrt(0.95 * 0.05 / 40_000) / 0.10314
        assert quantile_se(draws, 0.05) == pytest.approx(ref, rel=0.25)


class TestDecide:
    cv = CriticalValue(0.05, 1.5, 1000, 0, "fp")

    def test_zero_accepts(self):
        assert decide(StatisticValue(0.0, 0.0, "fp"), self.cv) == "accept"

    def test_equal_accepts(self):
        assert decide(StatisticValue(0.1, 1.5, "fp"), self.cv) == "accept"

    def test_above_rejects(self):
        assert decide(StatisticValue(0.1, np.nextafter(1.5, 2.0), "fp"), self.cv) == "reject"

    def test_mismatch(self):
        with pytest.raises(SpecMismatchError):
            decide(StatisticValue(0.1, 2.0, "other"), self.cv)


class TestSimulation:
    spec = StatisticSpec("iv_cvm", resolution=20)

    def test_reproducible(self):
        a = simulate_lf_critval(self.spec, 100, 0.05, 1000, seed=3)
        b = simulate_lf_critval(self.spec, 100, 0.05, 1000, seed=3)
        assert a == b
        assert a.value > 0
        assert a.fingerprint == self.spec.fingerprint(100)

    def test_worker_count_irrelevant(self):
        specs = [self.spec, StatisticSpec("iv_ks")]
        a = simulate_lf_draws(specs, 80, 300, seed=4, workers=1)
        b = simulate_lf_draws(specs, 80, 300, seed=4, workers=4)
        np.testing.assert_array_equal(a, b)

    def test_shared_draws_match_single(self):
        both = simulate_lf_critvals([self.spec, StatisticSpec("iv_ks")], 60, 0.1, 1000, seed=5)
        one = simulate_lf_critval(StatisticSpec("iv_ks"), 60, 0.1, 1000, seed=5)
        assert both[1].value == one.value

    def test_seed_variation_within_quantile_error(self):
        spec = StatisticSpec("iv_ks")
        d1 = simulate_lf_draws([spec], 200, 4000, seed=6)[:, 0]
        d2 = simulate_lf_draws([spec], 200, 4000, seed=7)[:, 0]
        se = np.hypot(quantile_se(d1, 0.05), quantile_se(d2, 0.05))
        assert abs(empirical_critval(d1, 0.05) - empirical_critval(d2, 0.05)) < 4 * se

    @pytest.mark.parametrize("family", ["iv_cvm", "iv_ks", "kern_cvm", "kern_ks"])
    def test_statistic_and_critval_fingerprints_agree(self, family):
        from cmitest.model import median_reg_moment, simulate_missing_data
        from cmitest.stats import compute_statistic
        from cmitest._parallel import rep_rng

        spec = StatisticSpec(family, resolution=10)
        sample = simulate_missing_data(MissingDataDesign.from_id(1), 120, rep_rng(0))
        stat = compute_statistic(sample, median_reg_moment(), np.array([0.5, 0.0]), spec)
        cv = simulate_lf_critval(spec, 120, 0.05, 1000, seed=1)
        assert stat.fingerprint == cv.fingerprint
        assert decide(stat, cv) in ("accept", "reject")

    def test_too_few_sims(self):
        with pytest.raises(InvalidArgumentError):
            simulate_lf_critval(self.spec, 100, 0.05, 999, seed=0)

    def test_degenerate_bandwidth(self):
        with pytest.raises(InvalidBandwidthError):
            simulate_lf_critval(StatisticSpec("kern_cvm", bandwidth_rule="n^-1/5"), 1, 0.05, 1000, seed=0)

    def test_custom_lf_gets_own_fingerprint(self):
        cv = simulate_lf_critval(StatisticSpec("iv_ks"), 50, 0.05, 1000, seed=0,
                                 design=MissingDataDesign.from_id(2), theta=(0.02 / 0.98, 0.0))
        assert ";lf=design2" in cv.fingerprint
        stat = StatisticValue(0.0, 0.0, StatisticSpec("iv_ks").fingerprint(50))
        assert decide(stat, cv) == "accept"


class TestCache:
    def test_roundtrip(self, tmp_path):
        cache = CritvalCache(tmp_path / "c" / "cv.tsv")
        spec = StatisticSpec("iv_ks")
        first = simulate_lf_critval(spec, 40, 0.05, 1000, seed=8, cache=cache)
        assert cache.get(spec.fingerprint(40), 0.05, 1000, 8) == first
        assert cache.get(spec.fingerprint(40), 0.05, 1000, 9) is None
        again = simulate_lf_critval(spec, 40, 0.05, 1000, seed=8, cache=cache)
        assert again == first
        lines = (tmp_path / "c" / "cv.tsv").read_text().splitlines()
        assert lines[0].split("\t")[:6] == ["fingerprint_hash", "alpha", "n", "n_sims", "seed", "critval"]
        assert len(lines) == 2

    def test_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CMITEST_CACHE_DIR", str(tmp_path))
        assert default_cache().path == tmp_path / "critvals.tsv"
        monkeypatch.delenv("CMITEST_CACHE_DIR")
        assert default_cache() is None
