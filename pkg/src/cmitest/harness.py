"""Monte Carlo power experiments on the missing-data median regression designs.

Every statistic in an experiment is evaluated on the same simulated samples
(common random numbers), and each replication draws from its own stream
determined by ``(seed, design, n, replication)``, so results do not depend
on the number of workers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import STREAM_POWER, map_reps, rep_rng
from .critval import CriticalValue, simulate_lf_critvals
from .errors import InvalidArgumentError
from .model import MissingDataDesign, boundary_theta1, median_reg_moment, simulate_missing_data
from .rates import RateSpec, rate_exponent
from .stats import RATE_RULES, PreparedScores, StatisticSpec, evaluate_prepared

__all__ = [
    "ExperimentPlan",
    "PowerRow",
    "PowerCurve",
    "RateCheckRow",
    "ComparisonRow",
    "simulate_scaled_stats",
    "run_power",
    "run_rate_check",
    "write_rate_csv",
    "compare_families",
    "POWER_HEADER",
    "RATE_HEADER",
]

POWER_HEADER = [
    "design", "family", "weighting", "p", "bandwidth_rule", "sigma_n_rule",
    "n", "a", "power", "se", "critval",
]
RATE_HEADER = [
    "design", "family", "weighting", "p", "bandwidth_rule", "sigma_n_rule",
    "n", "a_const", "q", "n^-q", "theta1", "power", "se", "critval",
]


@dataclass(frozen=True)
class ExperimentPlan:
    design_id: int
    n_list: tuple
    specs: tuple
    a_list: tuple = (0.1, 0.2, 0.3, 0.4, 0.5)
    alpha: float = 0.05
    n_reps: int = 1000
    seed: int = 0
    n_sims: int = 10000
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "a_list", tuple(float(a) for a in self.a_list))
        object.__setattr__(self, "specs", tuple(self.specs))
        if self.n_reps < 1:
            raise InvalidArgumentError("n_reps must be >= 1")
        if any(a < 0 for a in self.a_list):
            raise InvalidArgumentError("alternatives a must be >= 0")
        if not self.specs:
            raise InvalidArgumentError("no statistic specs")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _spec_cols(spec: StatisticSpec):
    bw = spec.bandwidth_rule or (repr(spec.bandwidth) if spec.bandwidth is not None else "")
    sig = ""
    if spec.weighting == "trunc_var":
        sig = spec.sigma_n_rule or repr(spec.sigma_n)
    elif spec.weighting == "multiscale":
        sig = "(log n)^2/n"
    return [spec.family, spec.weighting, _fmt(spec.p), bw, sig]


@dataclass(frozen=True)
class PowerRow:
    design: int
    spec: StatisticSpec
    n: int
    a: float
    power: float
    se: float
    mean_stat: float
    critval: float

    def csv_row(self):
        return [self.design, *_spec_cols(self.spec), self.n, _fmt(self.a),
                _fmt(self.power), _fmt(self.se), _fmt(self.critval)]


@dataclass
class PowerCurve:
    rows: list = field(default_factory=list)
    # (spec index, n, a index) -> boolean rejection indicators per replication
    rejections: dict = field(default_factory=dict, repr=False)

    def lookup(self, spec, n, a) -> PowerRow:
        for row in self.rows:
            if row.spec == spec and row.n == n and math.isclose(row.a, a):
                return row
        raise KeyError((spec.label, n, a))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(POWER_HEADER)
            for row in self.rows:
                writer.writerow(row.csv_row())


def _binom_se(p, reps):
    return math.sqrt(p * (1 - p) / reps)


def simulate_scaled_stats(design, n, thetas, specs, n_reps, seed, workers=1, model=None) -> np.ndarray:
    """Scaled statistics, shape ``(n_reps, len(thetas), len(specs))``, on shared samples."""
    model = model or median_reg_moment()
    thetas = [np.asarray(t, dtype=float) for t in thetas]

    def one(r):
        sample = simulate_missing_data(design, n, rep_rng(seed, STREAM_POWER, design.design_id, n, r))
        out = np.empty((len(thetas), len(specs)))
        for i, theta in enumerate(thetas):
            prep = PreparedScores.from_model(sample, model, theta)
            for k, spec in enumerate(specs):
                out[i, k] = evaluate_prepared(prep, spec).scaled
        return out

    return np.array(map_reps(one, n_reps, workers)).reshape(n_reps, len(thetas), len(specs))


def _critvals(specs, n, plan_like, cache, critvals):
    if critvals is not None and n in critvals:
        cvs = critvals[n]
        return [cv.value if isinstance(cv, CriticalValue) else float(cv) for cv in cvs]
    cvs = simulate_lf_critvals(
        specs, n, plan_like["alpha"], plan_like["n_sims"], plan_like["seed"], plan_like["workers"], cache
    )
    return [cv.value for cv in cvs]


def run_power(plan: ExperimentPlan, cache=None, critvals=None) -> PowerCurve:
    """Rejection frequencies at ``theta = (theta1_bar + a, 0)`` for every (spec, n, a).

    ``critvals`` optionally maps ``n`` to one critical value per spec;
    otherwise they are simulated under the least-favorable null.
    """
    design = MissingDataDesign.from_id(plan.design_id)
    tb = boundary_theta1(design)
    thetas = [(tb + a, 0.0) for a in plan.a_list]
    curve = PowerCurve()
    opts = dict(alpha=plan.alpha, n_sims=plan.n_sims, seed=plan.seed, workers=plan.workers)
    for n in plan.n_list:
        cvs = _critvals(plan.specs, n, opts, cache, critvals)
        stats = simulate_scaled_stats(design, n, thetas, plan.specs, plan.n_reps, plan.seed, plan.workers)
        for k, spec in enumerate(plan.specs):
            for i, a in enumerate(plan.a_list):
                rej = stats[:, i, k] > cvs[k]
                power = float(rej.mean())
                curve.rejections[(k, n, i)] = rej
                curve.rows.append(PowerRow(
                    plan.design_id, spec, n, a, power, _binom_se(power, plan.n_reps),
                    float(stats[:, i, k].mean()), cvs[k],
                ))
    return curve


@dataclass(frozen=True)
class RateCheckRow:
    design: int
    spec: StatisticSpec
    n: int
    a_const: float
    q: float
    shift: float
    theta1: float
    power: float
    se: float
    critval: float

    def csv_row(self):
        return [self.design, *_spec_cols(self.spec), self.n, _fmt(self.a_const), _fmt(self.q),
                _fmt(self.shift), _fmt(self.theta1), _fmt(self.power), _fmt(self.se), _fmt(self.critval)]


def write_rate_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RATE_HEADER)
        for row in rows:
            writer.writerow(row.csv_row())


def run_rate_check(
    spec: StatisticSpec, design_id: int, a_const: float, n_list, q: float | None = None,
    n_reps: int = 1000, alpha: float = 0.05, seed: int = 0, n_sims: int = 10000,
    workers: int = 1, cache=None, critvals=None,
) -> list[RateCheckRow]:
    """Power along ``theta1 = theta1_bar + a_const n^{-q}``.

    ``q`` defaults to the theoretical exponent of ``spec`` for the design's
    smoothness; pass it explicitly to evaluate a statistic along another
    statistic's alternatives.
    """
    design = MissingDataDesign.from_id(design_id)
    if q is None:
        if design.gamma is None:
            raise InvalidArgumentError("design has a flat conditional mean; pass q explicitly")
        s = None
        if spec.is_kernel:
            if spec.bandwidth_rule is None:
                raise InvalidArgumentError("a fixed bandwidth has no rate exponent; pass q explicitly")
            s = RATE_RULES[spec.bandwidth_rule]
        q = rate_exponent(RateSpec(spec.family, spec.weighting, spec.p, 1, design.gamma, s))
    tb = boundary_theta1(design)
    opts = dict(alpha=alpha, n_sims=n_sims, seed=seed, workers=workers)
    rows = []
    for n in n_list:
        shift = a_const * n ** -q
        theta1 = tb + shift
        cv = _critvals([spec], n, opts, cache, critvals)[0]
        stats = simulate_scaled_stats(design, n, [(theta1, 0.0)], [spec], n_reps, seed, workers)
        power = float((stats[:, 0, 0] > cv).mean())
        rows.append(RateCheckRow(design_id, spec, n, a_const, q, shift, theta1, power,
                                 _binom_se(power, n_reps), cv))
    return rows


@dataclass(frozen=True)
class ComparisonRow:
    design: int
    n: int
    a: float
    first: str
    second: str
    diff: float
    paired_se: float
    unpaired_se: float


def _default_pairs(specs):
    pairs = []
    for i, s1 in enumerate(specs):
        for j, s2 in enumerate(specs):
            if i == j:
                continue
            ks_vs_cvm = (
                s1.family.endswith("_ks") and s2.family.endswith("_cvm")
                and s1.family[:-3] == s2.family[:-4]
                and s1.weighting == s2.weighting
                and s1.bandwidth_rule == s2.bandwidth_rule
            )
            weighted_vs_not = (
                s1.family == s2.family and s1.weighting != "bounded" and s2.weighting == "bounded"
            )
            if ks_vs_cvm or weighted_vs_not:
                pairs.append((i, j))
    return pairs


def compare_families(plan: ExperimentPlan, curve: PowerCurve | None = None, pairs=None,
                     cache=None, critvals=None) -> list[ComparisonRow]:
    """Power differences ``first - second`` with paired (common random numbers) SEs.

    By default compares KS against CvM within a family and weighting, and
    weighted against bounded within a family.
    """
    curve = curve or run_power(plan, cache=cache, critvals=critvals)
    pairs = _default_pairs(plan.specs) if pairs is None else pairs
    out = []
    reps = plan.n_reps
    for n in plan.n_list:
        for ia, a in enumerate(plan.a_list):
            for i, j in pairs:
                r1 = curve.rejections[(i, n, ia)].astype(float)
                r2 = curve.rejections[(j, n, ia)].astype(float)
                d = r1 - r2
                paired = float(np.sqrt(np.mean((d - d.mean()) ** 2) / reps))
                p1, p2 = r1.mean(), r2.mean()
                unpaired = math.sqrt((p1 * (1 - p1) + p2 * (1 - p2)) / reps)
                out.append(ComparisonRow(plan.design_id, n, a, plan.specs[i].label, plan.specs[j].label,
                                         float(d.mean()), paired, unpaired))
    return out
