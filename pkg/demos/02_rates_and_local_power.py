"""How fast does each statistic detect a violation, and how large is the limit?

Part 1 prints detection-rate exponents q (alternatives at distance n^-q are
detected with non-trivial power) for a few smoothness levels gamma.
KS statistics always have the larger exponent; the kernel CvM exponent
uses its own optimal bandwidth exponent s*.

Part 2 compares the Monte Carlo mean of the scaled IV-CvM statistic under
Design 3, at theta1 = boundary + a n^-1/5, with the local limit computed by
quadrature. Design 3's conditional mean near x = 1/2 is
2 (x - 1/2)^2 - 0.49 * (theta1 - boundary), i.e. gamma = 2, psi = 2 and
a derivative of -0.49 in theta1. The finite-n mean approaches the limit
from below for larger a, because at moderate n the violated region is
still a sizeable part of [0, 1], while the limit integrates the local
quadratic approximation over the whole real line.
"""

import math

from cmitest import MissingDataDesign, StatisticSpec, boundary_theta1
from cmitest.harness import simulate_scaled_stats
from cmitest.rates import LocalModelParams, RateSpec, optimal_bandwidth_exponent, predicted_scaled_limit, rate_exponent

print("Part 1: exponents q with d_X = 1, p = 1")
print(f"{'gamma':>6} {'iv_cvm':>8} {'iv_ks':>8} {'cvm var':>8} {'kern_cvm':>9} {'s*':>6}")
for gamma in (0.5, 1.0, 2.0):
    s_star, q_kern = optimal_bandwidth_exponent(1.0, 1, gamma)
    print(f"{gamma:6.1f} {rate_exponent(RateSpec('iv_cvm', 'bounded', 1, 1, gamma)):8.4f} "
          f"{rate_exponent(RateSpec('iv_ks', 'bounded', math.inf, 1, gamma)):8.4f} "
          f"{rate_exponent(RateSpec('iv_cvm', 'trunc_var', 1, 1, gamma)):8.4f} {q_kern:9.4f} {s_star:6.3f}")

print("\nPart 2: Monte Carlo mean of the scaled IV-CvM statistic vs. its local limit")
design = MissingDataDesign.from_id(3)
tb = boundary_theta1(design)
local = LocalModelParams(gamma=2.0, psi=2.0, mbar_theta=-0.49)
for a in (0.5, 1.0):
    limit = predicted_scaled_limit([local], a)
    for n in (1000, 4000):
        stats = simulate_scaled_stats(design, n, [(tb + a * n ** -0.2, 0.0)], [StatisticSpec("iv_cvm")],
                                      n_reps=200, seed=3)
        print(f"  a = {a}, n = {n:5d}: mean {stats.mean():.4f}   limit {limit:.4f}   ratio {stats.mean() / limit:.3f}")
