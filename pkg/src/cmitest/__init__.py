"""Tests of conditional moment inequalities with CvM and KS statistics.

Modules
-------
model
    Moment functions, samples and the missing-data median regression designs.
instruments
    Instrument families, integration measures and the exact interval search.
stats
    Instrument- and kernel-based CvM and KS statistics.
critval
    Least-favorable simulated critical values and the test decision.
rates
    Detection-rate exponents and local-power functionals.
harness
    Monte Carlo power experiments.
cli
    Command-line interface (``cmitest``).
"""

__version__ = "0.1.0"

from .critval import CriticalValue, decide, simulate_lf_critval, simulate_lf_critvals
from .errors import CMIError
from .instruments import InstrumentFamily, MuMeasure, enumerate_grid, exact_instrument_supremum_index
from .model import (
    MissingDataDesign,
    MomentModel,
    Sample,
    boundary_theta1,
    interval_reg_moment,
    median_reg_moment,
    simulate_missing_data,
)
from .stats import StatisticSpec, StatisticValue, compute_statistic, iv_cvm, iv_ks, kern_cvm, kern_ks

__all__ = [
    "__version__",
    "CMIError",
    "Sample",
    "MomentModel",
    "MissingDataDesign",
    "median_reg_moment",
    "interval_reg_moment",
    "simulate_missing_data",
    "boundary_theta1",
    "InstrumentFamily",
    "MuMeasure",
    "enumerate_grid",
    "exact_instrument_supremum_index",
    "StatisticSpec",
    "StatisticValue",
    "compute_statistic",
    "iv_cvm",
    "iv_ks",
    "kern_cvm",
    "kern_ks",
    "CriticalValue",
    "simulate_lf_critval",
    "simulate_lf_critvals",
    "decide",
]
