"""Least-favorable simulated critical values and the test decision.

The least-favorable null is design 1 (constant missingness 0.1) at
``theta = (theta1_bar, 0)``, where the conditional mean of the moment is
identically zero. The critical value is the order statistic of rank
``ceil((1 - alpha) B)`` of ``B`` simulated scaled statistics.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._parallel import STREAM_CRITVAL, map_reps, rep_rng
from .errors import InvalidArgumentError, SpecMismatchError
from .model import MissingDataDesign, boundary_theta1, median_reg_moment, simulate_missing_data
from .stats import PreparedScores, StatisticSpec, StatisticValue, evaluate_prepared, fingerprint_hash

__all__ = [
    "CriticalValue",
    "empirical_critval",
    "quantile_se",
    "simulate_lf_draws",
    "simulate_lf_critval",
    "simulate_lf_critvals",
    "decide",
    "CritvalCache",
    "default_cache",
]

CACHE_ENV = "CMITEST_CACHE_DIR"


@dataclass(frozen=True)
class CriticalValue:
    alpha: float
    value: float
    n_sims: int
    seed: int
    fingerprint: str = ""


def _rank(alpha, b):
    # the rounding guards against (1 - alpha) * b landing a hair above an integer
    return max(1, int(math.ceil(round((1.0 - alpha) * b, 9))))


def empirical_critval(draws, alpha: float) -> float:
    """Order statistic of rank ``ceil((1 - alpha) B)`` of ``draws``."""
    if not 0 < alpha < 1:
        raise InvalidArgumentError("alpha must be in (0, 1)")
    d = np.sort(np.asarray(draws, dtype=float))
    if d.size == 0:
        raise InvalidArgumentError("no draws")
    return float(d[_rank(alpha, d.size) - 1])


def quantile_se(draws, alpha: float) -> float:
    """Standard error of the ``1 - alpha`` quantile from binomial order-statistic bounds."""
    d = np.sort(np.asarray(draws, dtype=float))
    b = d.size
    q = 1.0 - alpha
    half = math.sqrt(q * (1 - q) / b)
    lo = min(max(int(math.floor((q - half) * b)), 1), b) - 1
    hi = min(max(int(math.ceil((q + half) * b)), 1), b) - 1
    return float(d[hi] - d[lo]) / 2.0


def simulate_lf_draws(
    specs,
    n: int,
    n_sims: int,
    seed: int,
    workers: int = 1,
    design: MissingDataDesign | None = None,
    theta=None,
    model=None,
) -> np.ndarray:
    """Scaled statistics under the least-favorable null, shape ``(n_sims, len(specs))``.

    All specs are evaluated on the same simulated datasets.
    """
    design = design or MissingDataDesign.from_id(1)
    model = model or median_reg_moment()
    if theta is None:
        theta = (boundary_theta1(design), 0.0)
    theta = np.asarray(theta, dtype=float)
    specs = list(specs)
    for spec in specs:
        if spec.is_kernel:
            spec.bandwidth_at(n)

    def one(r):
        sample = simulate_missing_data(design, n, rep_rng(seed, STREAM_CRITVAL, n, r))
        prep = PreparedScores.from_model(sample, model, theta)
        return [evaluate_prepared(prep, spec).scaled for spec in specs]

    return np.array(map_reps(one, n_sims, workers), dtype=float).reshape(n_sims, len(specs))


def simulate_lf_critvals(
    specs, n: int, alpha: float, n_sims: int, seed: int, workers: int = 1, cache=None, **lf
) -> list[CriticalValue]:
    """Critical values for several specs from one shared set of null simulations."""
    if n_sims < 1000:
        raise InvalidArgumentError("n_sims must be >= 1000")
    if not 0 < alpha < 1:
        raise InvalidArgumentError("alpha must be in (0, 1)")
    specs = list(specs)
    lf = {k: v for k, v in lf.items() if v is not None}
    fps = [spec.fingerprint(n) + _lf_suffix(lf) for spec in specs]
    out = [cache.get(fp, alpha, n_sims, seed) if cache is not None else None for fp in fps]
    missing = [k for k, cv in enumerate(out) if cv is None]
    if missing:
        draws = simulate_lf_draws([specs[k] for k in missing], n, n_sims, seed, workers, **lf)
        for col, k in enumerate(missing):
            cv = CriticalValue(alpha, empirical_critval(draws[:, col], alpha), n_sims, seed, fps[k])
            out[k] = cv
            if cache is not None:
                cache.put(cv, n)
    return out


def simulate_lf_critval(
    spec: StatisticSpec, n: int, alpha: float, n_sims: int, seed: int, workers: int = 1, cache=None, **lf
) -> CriticalValue:
    return simulate_lf_critvals([spec], n, alpha, n_sims, seed, workers, cache, **lf)[0]


def _lf_suffix(lf):
    if not lf:
        return ""
    parts = []
    if "design" in lf:
        parts.append(f"design{lf['design'].design_id}")
    if "theta" in lf:
        parts.append("theta=" + ",".join(repr(float(v)) for v in np.ravel(lf["theta"])))
    if "model" in lf:
        parts.append(lf["model"].name)
    return ";lf=" + ":".join(parts)


def decide(stat: StatisticValue, cv: CriticalValue) -> str:
    """``"reject"`` iff the scaled statistic strictly exceeds the critical value."""
    if stat.fingerprint and cv.fingerprint:
        base = cv.fingerprint.split(";lf=")[0]
        if stat.fingerprint != base:
            raise SpecMismatchError(
                f"statistic computed under {stat.fingerprint!r}, critical value under {cv.fingerprint!r}"
            )
    return "reject" if stat.scaled > cv.value else "accept"


class CritvalCache:
    """Tab-delimited on-disk cache of critical values keyed by spec fingerprint."""

    HEADER = ["fingerprint_hash", "alpha", "n", "n_sims", "seed", "critval", "fingerprint"]

    def __init__(self, path):
        self.path = Path(path)

    def _rows(self):
        if not self.path.exists():
            return []
        with open(self.path, newline="") as fh:
            return list(csv.DictReader(fh, delimiter="\t"))

    def get(self, fingerprint: str, alpha: float, n_sims: int, seed: int) -> CriticalValue | None:
        key = fingerprint_hash(fingerprint)
        for row in self._rows():
            if (
                row["fingerprint_hash"] == key
                and row["fingerprint"] == fingerprint
                and float(row["alpha"]) == alpha
                and int(row["n_sims"]) == n_sims
                and int(row["seed"]) == seed
            ):
                return CriticalValue(alpha, float(row["critval"]), n_sims, seed, fingerprint)
        return None

    def put(self, cv: CriticalValue, n: int) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        new = not self.path.exists()
        with open(self.path, "a", newline="") as fh:
            writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
            if new:
                writer.writerow(self.HEADER)
            writer.writerow(
                [fingerprint_hash(cv.fingerprint), repr(cv.alpha), n, cv.n_sims, cv.seed, repr(cv.value), cv.fingerprint]
            )


def default_cache() -> CritvalCache | None:
    """Cache under ``$CMITEST_CACHE_DIR`` if set."""
    root = os.environ.get(CACHE_ENV)
    return CritvalCache(Path(root) / "critvals.tsv") if root else None
