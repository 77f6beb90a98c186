import csv
import math

import pytest

from cmitest.errors import InvalidArgumentError
from cmitest.harness import (
    POWER_HEADER,
    RATE_HEADER,
    ExperimentPlan,
    compare_families,
    run_power,
    run_rate_check,
    write_rate_csv,
)
from cmitest.stats import StatisticSpec

CVM = StatisticSpec("iv_cvm", resolution=20)
KS = StatisticSpec("iv_ks")


@pytest.fixture(scope="module")
def design1_curve():
    plan = ExperimentPlan(1, (200,), (CVM, KS), a_list=(0.0, 0.2, 0.5), n_reps=200, seed=11, n_sims=1000)
    return plan, run_power(plan)


class TestPower:
    def test_size_at_boundary(self, design1_curve):
        plan, curve = design1_curve
        for spec in plan.specs:
            row = curve.lookup(spec, 200, 0.0)
            # least-favorable null coincides with Design 1 at a = 0
            assert abs(row.power - 0.05) < 4 * math.sqrt(0.05 * 0.95 / 200)

    def test_power_grows_with_distance(self, design1_curve):
        plan, curve = design1_curve
        for spec in plan.specs:
            vals = [curve.lookup(spec, 200, a).power for a in plan.a_list]
            assert vals == sorted(vals)
            assert vals[-1] > 0.9

    def test_single_replication(self):
        plan = ExperimentPlan(2, (50,), (KS,), a_list=(0.3,), n_reps=1, n_sims=1000)
        row = run_power(plan).rows[0]
        assert row.power in (0.0, 1.0)
        assert row.se == 0.0

    def test_explicit_critvals(self):
        plan = ExperimentPlan(1, (60,), (KS,), a_list=(0.5,), n_reps=20)
        zero = run_power(plan, critvals={60: [-1.0]}).rows[0]
        assert zero.power == 1.0 and zero.critval == -1.0

    def test_worker_count_irrelevant(self, tmp_path):
        out = []
        for w in (1, 3):
            plan = ExperimentPlan(3, (80,), (CVM, KS), a_list=(0.1, 0.3), n_reps=40, seed=2, n_sims=1000, workers=w)
            path = tmp_path / f"p{w}.csv"
            run_power(plan).to_csv(path)
            out.append(path.read_bytes())
        assert out[0] == out[1]

    def test_csv_header(self, design1_curve, tmp_path):
        _, curve = design1_curve
        path = tmp_path / "power.csv"
        curve.to_csv(path)
        rows = list(csv.reader(path.open()))
        assert rows[0] == POWER_HEADER
        assert len(rows) == 1 + len(curve.rows)
        assert all(0.0 <= float(r[8]) <= 1.0 for r in rows[1:])

    def test_bad_plan(self):
        with pytest.raises(InvalidArgumentError):
            ExperimentPlan(1, (50,), (KS,), n_reps=0)
        with pytest.raises(InvalidArgumentError):
            ExperimentPlan(1, (50,), (KS,), a_list=(-0.1,))
        with pytest.raises(InvalidArgumentError):
            ExperimentPlan(1, (50,), ())


class TestComparisons:
    def test_identical_specs_cancel(self):
        plan = ExperimentPlan(2, (60,), (KS, KS), a_list=(0.2,), n_reps=50, n_sims=1000)
        rows = compare_families(plan, pairs=[(0, 1)])
        assert rows[0].diff == 0.0 and rows[0].paired_se == 0.0

    def test_paired_se_not_larger(self, design1_curve):
        plan, curve = design1_curve
        rows = compare_families(plan, curve=curve)
        assert rows
        for r in rows:
            assert r.first == KS.label and r.second == CVM.label
            assert r.paired_se <= r.unpaired_se + 1e-12

    def test_default_pairs_weighted_vs_bounded(self):
        tv = StatisticSpec("iv_cvm", weighting="trunc_var", sigma_n_rule="n^-1/3", resolution=20)
        plan = ExperimentPlan(2, (60,), (CVM, tv), a_list=(0.2,), n_reps=30, n_sims=1000)
        rows = compare_families(plan)
        assert [(r.first, r.second) for r in rows] == [(tv.label, CVM.label)]


class TestRateCheck:
    def test_zero_constant_is_size(self):
        rows = run_rate_check(KS, 1, 0.0, [150], q=0.2, n_reps=200, seed=5, n_sims=1000)
        assert rows[0].theta1 == pytest.approx(1 / 9)
        assert abs(rows[0].power - 0.05) < 4 * math.sqrt(0.05 * 0.95 / 200)

    def test_default_exponent(self):
        rows = run_rate_check(CVM, 3, 1.0, [100], n_reps=10, n_sims=1000)
        assert rows[0].q == pytest.approx(0.2)
        assert rows[0].shift == pytest.approx(100 ** -0.2)

    def test_kernel_needs_rule(self):
        with pytest.raises(InvalidArgumentError):
            run_rate_check(StatisticSpec("kern_cvm", bandwidth=0.2), 3, 1.0, [100], n_reps=10)

    def test_flat_design_needs_q(self):
        with pytest.raises(InvalidArgumentError):
            run_rate_check(KS, 1, 1.0, [100], n_reps=10)

    def test_csv(self, tmp_path):
        rows = run_rate_check(KS, 2, 0.5, [50, 100], q=1 / 3, n_reps=10, n_sims=1000)
        path = tmp_path / "rate.csv"
        write_rate_csv(rows, path)
        got = list(csv.reader(path.open()))
        assert got[0] == RATE_HEADER
        assert [int(r[6]) for r in got[1:]] == [50, 100]
