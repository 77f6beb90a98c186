import math
from fractions import Fraction

import numpy as np
import pytest

from cmitest.errors import InvalidArgumentError, UnsupportedSpecError
from cmitest.rates import (
    LocalModelParams,
    RateSpec,
    lambda_bdd,
    lambda_kern,
    lambda_kern_tilde,
    lambda_kern_tilde_radial,
    lambda_var,
    optimal_bandwidth_exponent,
    predicted_scaled_limit,
    rate_at_n,
    rate_exponent,
    rates_rows,
)


def bf_instrument_lambda(res, c=-1.0, gamma=2.0, psi=1.0, p=1.0, h_power=0.0, inner=256, X=3.0, H=4.0):
    """Midpoint triple sum over (x_tilde, h, x) with a uniform kernel."""
    xt = -X + (np.arange(res) + 0.5) * 2 * X / res
    hs = (np.arange(res) + 0.5) * H / res
    u = -0.5 + (np.arange(inner) + 0.5) / inner
    total = 0.0
    for h in hs:
        x = xt[:, None] + h * u[None, :]
        br = (psi * np.abs(x) ** gamma + c).sum(axis=1) * h / inner * h**h_power
        total += np.sum(np.maximum(-br, 0) ** p) * (2 * X / res) * (H / res)
    return total


class TestExponents:
    def test_cvm_bounded(self):
        assert rate_exponent(RateSpec("iv_cvm", "bounded", 1, 1, 2)) == pytest.approx(0.2, abs=1e-15)

    def test_ks_bounded(self):
        assert rate_exponent(RateSpec("iv_ks", "bounded", math.inf, 1, 2)) == pytest.approx(1 / 3, abs=1e-15)

    def test_cvm_p_to_infinity(self):
        big = rate_exponent(RateSpec("iv_cvm", "bounded", 1e12, 1, 2))
        assert big == pytest.approx(rate_exponent(RateSpec("iv_ks", "bounded", math.inf, 1, 2)), abs=1e-10)

    def test_variance_weights(self):
        assert rate_exponent(RateSpec("iv_cvm", "trunc_var", 1, 1, 1)) == pytest.approx(1 / 7)
        assert rate_exponent(RateSpec("iv_ks", "trunc_var", math.inf, 2, 1)) == pytest.approx(1 / 4)

    def test_optimal_bandwidth(self):
        s, q = optimal_bandwidth_exponent(1, 1, 2)
        assert s == pytest.approx(1 / 7) and q == pytest.approx(2 / 7)
        s, _ = optimal_bandwidth_exponent(math.inf, 1, 2)
        assert s == pytest.approx(1 / 5)

    @pytest.mark.parametrize("p,d,g", [(1, 1, 2), (2, 3, 1), (4, 2, 0.5)])
    def test_kernel_branches_meet_at_knee(self, p, d, g):
        s_star, q_star = optimal_bandwidth_exponent(p, d, g)
        fast = s_star * g
        slow = (1 - s_star * d) / (2 * (1 + d / (p * g)))
        assert fast == pytest.approx(slow, abs=1e-14)
        assert rate_exponent(RateSpec("kern_cvm", "bounded", p, d, g, s_star)) == pytest.approx(q_star, abs=1e-14)
        for eps in (1e-3, -1e-3):
            q = rate_exponent(RateSpec("kern_cvm", "bounded", p, d, g, s_star + eps))
            assert q < q_star

    def test_kern_ks(self):
        assert rate_exponent(RateSpec("kern_ks", "bounded", math.inf, 1, 2, 1 / 5)) == pytest.approx(2 / 5)
        assert rate_exponent(RateSpec("kern_ks", "bounded", math.inf, 1, 2, 1 / 2)) == pytest.approx(1 / 4)

    def test_random_tuples(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = int(rng.integers(1, 9))
            d = int(rng.integers(1, 5))
            g = Fraction(int(rng.integers(1, 9)), 4)
            exact_cvm = g / (2 * (d + g + Fraction(d + 1, p)))
            exact_ks = g / (2 * (d + g))
            exact_var = g / (2 * (Fraction(d, 2) + g + Fraction(d + 1, p)))
            q_cvm = rate_exponent(RateSpec("iv_cvm", "bounded", p, d, float(g)))
            q_ks = rate_exponent(RateSpec("iv_ks", "bounded", math.inf, d, float(g)))
            q_var = rate_exponent(RateSpec("iv_cvm", "trunc_var", p, d, float(g)))
            assert abs(q_cvm - float(exact_cvm)) < 1e-12
            assert abs(q_ks - float(exact_ks)) < 1e-12
            assert abs(q_var - float(exact_var)) < 1e-12
            assert q_cvm < q_ks and q_var > q_cvm

    def test_rate_at_n_logs(self):
        spec = RateSpec("iv_ks", "trunc_var", math.inf, 1, 2)
        q = rate_exponent(spec)
        assert rate_at_n(spec, 1000) == pytest.approx((1000 / math.log(1000)) ** -q)
        assert rate_at_n(RateSpec("iv_cvm"), 1000) == pytest.approx(1000 ** -0.2)

    @pytest.mark.parametrize(
        "kwargs,err",
        [
            (dict(family="iv_cvm", gamma=0.0), InvalidArgumentError),
            (dict(family="iv_cvm", p=0.5), InvalidArgumentError),
            (dict(family="kern_cvm", s=1.5), InvalidArgumentError),
            (dict(family="kern_cvm", s=0.2, weighting="trunc_var"), UnsupportedSpecError),
            (dict(family="gmm"), UnsupportedSpecError),
        ],
    )
    def test_invalid(self, kwargs, err):
        with pytest.raises(err):
            RateSpec(**kwargs)

    def test_rows(self):
        rows = rates_rows([(1.0, 1, 2.0)], [100, 1000])
        cvm = [r for r in rows if r[0] == "iv_cvm" and r[1] == "bounded"]
        assert len(cvm) == 2 and cvm[0][7] == pytest.approx(0.2)
        kern = [r for r in rows if r[0] == "kern_cvm"]
        assert kern[0][5] == pytest.approx(1 / 7)


class TestLambda:
    base = LocalModelParams(gamma=2.0, psi=1.0, mbar_theta=-1.0)

    def test_nonnegative_drift(self):
        p = LocalModelParams(mbar_theta=1.0)
        assert lambda_bdd(p, 1.0) == 0.0
        assert lambda_var(p, 1.0) == 0.0
        assert lambda_kern(p, 1.0, 0.5) == 0.0
        assert lambda_kern_tilde(p, 1.0) == 0.0

    def test_bdd_against_triple_sum(self):
        a = bf_instrument_lambda(400)
        b = bf_instrument_lambda(800)
        assert abs(a - b) / b < 0.01
        assert lambda_bdd(self.base, 1.0) == pytest.approx(b, rel=1e-3)
        assert lambda_bdd(self.base, 1.0) == pytest.approx(3.2, rel=1e-5)

    def test_var_against_triple_sum(self):
        a = bf_instrument_lambda(400, h_power=-0.5)
        b = bf_instrument_lambda(800, h_power=-0.5)
        assert abs(a - b) / b < 0.01
        assert lambda_var(self.base, 1.0) == pytest.approx(b, rel=1e-2)

    def test_bdd_resolution_stable(self):
        assert lambda_bdd(self.base, 1.0, panels=100) == pytest.approx(lambda_bdd(self.base, 1.0, panels=200), rel=1e-4)

    def test_density_homogeneity(self):
        for p in (1.0, 2.0):
            a = lambda_bdd(self.base, 1.0, p)
            b = lambda_bdd(LocalModelParams(mbar_theta=-1.0, f_x=2.0), 1.0, p)
            assert b == pytest.approx(2**p * a, rel=1e-9)

    def test_variance_weight_homogeneity(self):
        for p in (1.0, 2.0):
            a = lambda_var(self.base, 1.0, p)
            b = lambda_var(LocalModelParams(mbar_theta=-1.0, s2=4.0), 1.0, p)
            assert b == pytest.approx(0.5**p * a, rel=1e-9)

    def test_monotone_and_convex_in_drift(self):
        vals = [lambda_bdd(self.base, a) for a in (0.5, 1.0, 1.5, 2.0)]
        assert all(x < y for x, y in zip(vals, vals[1:]))
        diffs = np.diff(vals)
        assert all(x <= y for x, y in zip(diffs, diffs[1:]))

    def test_kern_tilde_four_thirds(self):
        assert lambda_kern_tilde(self.base, 1.0) == pytest.approx(4 / 3, abs=1e-10)
        assert lambda_kern_tilde_radial(self.base, 1.0) == pytest.approx(4 / 3, abs=1e-12)

    def test_radial_higher_dimension(self):
        # d = 3, gamma = 2, p = 1: int_{|v|<1} (1 - |v|^2) dv = 4 pi (1/3 - 1/5)
        p = LocalModelParams(gamma=2.0, mbar_theta=-1.0, d_x=3)
        assert lambda_kern_tilde_radial(p, 1.0) == pytest.approx(4 * math.pi * (1 / 3 - 1 / 5), rel=1e-12)

    def test_kern_to_tilde(self):
        tilde = lambda_kern_tilde(self.base, 1.0)
        errs = [abs(lambda_kern(self.base, 1.0, ch) - tilde) for ch in (1e-1, 1e-2, 1e-3)]
        assert errs[1] < 1e-3 and errs[2] < 1e-4
        assert errs[0] > errs[1] > errs[2]

    def test_asymmetric_psi(self):
        both = lambda_kern_tilde(LocalModelParams(psi=lambda d: np.where(d > 0, 1.0, 4.0), mbar_theta=-1.0), 1.0)
        # half of each side: (2/3)(1 + 1/2)
        assert both == pytest.approx(2 / 3 + 1 / 3, abs=1e-10)

    def test_multidimensional_not_supported(self):
        with pytest.raises(UnsupportedSpecError):
            lambda_bdd(LocalModelParams(d_x=2), 1.0)

    def test_bad_psi(self):
        with pytest.raises(InvalidArgumentError):
            LocalModelParams(psi=0.0)


class TestLimits:
    base = LocalModelParams(gamma=2.0, psi=1.0, mbar_theta=1.0)

    def test_single_component(self):
        assert predicted_scaled_limit([self.base], -1.0) == pytest.approx(lambda_bdd(self.base, -1.0))

    def test_nonnegative_drift(self):
        assert predicted_scaled_limit([self.base, self.base], 1.0, p=2) == 0.0

    def test_vanishes_as_a_to_zero(self):
        vals = [predicted_scaled_limit([self.base], -(2.0**-i)) for i in range(6)]
        assert all(x > y for x, y in zip(vals, vals[1:]))
        assert vals[-1] < 1e-3 * vals[0]

    def test_aggregation(self):
        two = predicted_scaled_limit([self.base, self.base], -1.0, p=2)
        assert two == pytest.approx(math.sqrt(2 * lambda_bdd(self.base, -1.0, 2)))

    def test_kernel_limit(self):
        r = predicted_scaled_limit([self.base], -1.0, family="kern_cvm", c_h=0.5)
        assert r == pytest.approx(math.sqrt(0.5) * lambda_kern(self.base, -1.0, 0.5))
        with pytest.raises(InvalidArgumentError):
            predicted_scaled_limit([self.base], -1.0, family="kern_cvm")

    def test_ks_has_no_functional(self):
        with pytest.raises(UnsupportedSpecError):
            predicted_scaled_limit([self.base], -1.0, family="iv_ks")
