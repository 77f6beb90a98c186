"""Testing a single parameter value on one simulated data set.

The missing-data median regression designs identify a set of intercepts:
with outcomes missing with probability p(x), the intercept theta1 is
admissible (at slope 0) up to ``boundary_theta1(design)``. We draw one
sample from Design 2, evaluate all four statistics at a point inside the
identified set and at a point outside it, and compare each with its
least-favorable critical value.

Run with ``python demos/01_testing_one_sample.py``.
"""

import numpy as np

from cmitest import (
    MissingDataDesign,
    StatisticSpec,
    boundary_theta1,
    compute_statistic,
    decide,
    median_reg_moment,
    simulate_lf_critvals,
    simulate_missing_data,
)
from cmitest._parallel import rep_rng

design = MissingDataDesign.from_id(2)
model = median_reg_moment()
n = 1000
sample = simulate_missing_data(design, n, rep_rng(2024))
tb = boundary_theta1(design)
print(f"Design 2, n = {n}; the identified intercepts (slope 0) end at theta1 = {tb:.4f}")

specs = [
    StatisticSpec("iv_cvm"),
    StatisticSpec("iv_ks"),
    StatisticSpec("kern_cvm", bandwidth_rule="n^-1/5"),
    StatisticSpec("kern_ks", bandwidth_rule="n^-1/5"),
]

# One least-favorable simulation serves all four statistics.
critvals = simulate_lf_critvals(specs, n, alpha=0.05, n_sims=2000, seed=1)

for theta1 in (tb - 0.05, tb + 0.8):
    theta = np.array([theta1, 0.0])
    print(f"\ntheta = ({theta1:.3f}, 0)")
    for spec, cv in zip(specs, critvals):
        stat = compute_statistic(sample, model, theta, spec)
        print(f"  {spec.label:28s} statistic {stat.scaled:7.3f}   critical value {cv.value:6.3f}   "
              f"{decide(stat, cv)}")
