"""Samples, moment functions and the simulation designs.

Two moment models are provided:

* median regression with an (endogenously) missing outcome, where only the
  upper bound ``w_high`` of the latent outcome is observed and a missing
  outcome is coded as ``+inf``;
* interval regression, where the latent outcome is bracketed by
  ``[w_low, w_high]``.

The missing-data designs simulate ``W* = theta1* + theta2* X + u`` with
``X ~ U(0, 1)`` and ``u ~ U(-1, 1)``, and drop ``W*`` with probability
``p(X)`` independently of ``(W*, X)`` given ``X``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import optimize

from .errors import DegenerateDesignError, InvalidArgumentError, InvalidDataError

# Finite stand-ins for +/-inf: comparisons stay branch-free and the values
# survive arithmetic without producing NaN.
INF_SENTINEL = float(np.finfo(np.float64).max)
NEG_INF_SENTINEL = -INF_SENTINEL

__all__ = [
    "INF_SENTINEL",
    "NEG_INF_SENTINEL",
    "Sample",
    "MomentModel",
    "MissingDataDesign",
    "simulate_missing_data",
    "median_reg_moment",
    "interval_reg_moment",
    "boundary_theta1",
    "write_sample_csv",
    "read_sample_csv",
]


@dataclass(frozen=True)
class Sample:
    """Observed data ``(X_i, W_i)``.

    Parameters
    ----------
    x : array_like, shape (n, d_X) or (n,)
        Covariates. A 1-D array is treated as ``d_X = 1``.
    w : mapping of str to array_like, each shape (n,)
        Outcome variables, keyed by name (e.g. ``"w_high"``).
    """

    x: np.ndarray
    w: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1:
            raise InvalidArgumentError(f"x must have shape (n, d_X) with n >= 1, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidDataError("covariates must be finite")
        x.setflags(write=False)
        w = {}
        for name, col in self.w.items():
            col = np.array(col, dtype=float)
            if col.shape != (x.shape[0],):
                raise InvalidArgumentError(
                    f"outcome {name!r} has shape {col.shape}, expected ({x.shape[0]},)"
                )
            if np.any(np.isnan(col)) or np.any(np.isinf(col)):
                raise InvalidDataError(
                    f"outcome {name!r} contains NaN or IEEE inf; use INF_SENTINEL"
                )
            col.setflags(write=False)
            w[name] = col
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d_x(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class MomentModel:
    """A moment function ``m(W, theta)`` with ``|m| <= bound`` a.s.

    ``func(sample, theta)`` must return an ``(n, d_y)`` array.
    """

    name: str
    d_theta: int
    d_y: int
    bound: float
    func: Callable[[Sample, np.ndarray], np.ndarray] = field(repr=False)

    def evaluate(self, sample: Sample, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.d_theta,):
            raise InvalidArgumentError(
                f"{self.name}: theta must have length {self.d_theta}, got {theta.shape}"
            )
        return self.func(sample, theta)


def _median_reg(sample, theta):
    fitted = theta[0] + sample.x[:, 0] * theta[1]
    return ((fitted <= sample.w["w_high"]) - 0.5)[:, None]


def median_reg_moment() -> MomentModel:
    """``m(W, theta) = 1{theta1 + theta2 X <= W_high} - 1/2``."""
    return MomentModel("median_reg", d_theta=2, d_y=1, bound=0.5, func=_median_reg)


def interval_reg_moment(w_min: float = -1.0, w_max: float = 1.0, d_x: int = 1) -> MomentModel:
    """Interval regression moments ``(W_high - (1,X')theta, (1,X')theta - W_low)``.

    ``bound`` is ``w_max - w_min``, which dominates ``|m|`` whenever the
    fitted value ``(1,X')theta`` lies in ``[w_min, w_max]``.
    """
    if not w_max > w_min:
        raise InvalidArgumentError("w_max must exceed w_min")

    def func(sample, theta):
        lo, hi = sample.w["w_low"], sample.w["w_high"]
        if np.any(lo > hi):
            raise InvalidDataError("w_low exceeds w_high for some observations")
        fitted = theta[0] + sample.x @ theta[1:]
        return np.column_stack([hi - fitted, fitted - lo])

    return MomentModel("interval_reg", d_theta=d_x + 1, d_y=2, bound=w_max - w_min, func=func)


_DESIGN_PROBS = {
    1: lambda x: np.full_like(np.asarray(x, dtype=float), 0.1),
    2: lambda x: 0.02 + 2 * 0.98 * np.abs(np.asarray(x, dtype=float) - 0.5),
    3: lambda x: 0.02 + 4 * 0.98 * (np.asarray(x, dtype=float) - 0.5) ** 2,
}
_DESIGN_GAMMA = {1: None, 2: 1.0, 3: 2.0}


@dataclass(frozen=True)
class MissingDataDesign:
    """Missing-outcome median regression design.

    Use :meth:`from_id` for the three standard designs; pass ``missing_prob``
    directly to override the missingness probability (e.g. ``p = 0``).
    """

    design_id: int
    theta_star: tuple = (0.0, 0.0)
    missing_prob: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.missing_prob is None:
            if self.design_id not in _DESIGN_PROBS:
                raise InvalidArgumentError(f"unknown design id {self.design_id}")
            object.__setattr__(self, "missing_prob", _DESIGN_PROBS[self.design_id])
        object.__setattr__(self, "theta_star", tuple(float(t) for t in self.theta_star))

    @classmethod
    def from_id(cls, design_id: int) -> "MissingDataDesign":
        return cls(int(design_id))

    @property
    def gamma(self) -> float | None:
        """Smoothness of the conditional mean at the boundary (None if flat)."""
        return _DESIGN_GAMMA.get(self.design_id)

    def p(self, x) -> np.ndarray:
        return np.broadcast_to(self.missing_prob(x), np.shape(x)).astype(float)

    def conditional_mean(self, theta, x) -> np.ndarray:
        """Closed-form ``E[m(W, theta) | X = x]`` for the median-regression moment."""
        x = np.asarray(x, dtype=float)
        t1s, t2s = self.theta_star
        c = (theta[0] - t1s) + (theta[1] - t2s) * x
        p_obs_above = np.clip((1.0 - c) / 2.0, 0.0, 1.0)
        px = self.p(x)
        return px + (1.0 - px) * p_obs_above - 0.5


def simulate_missing_data(design: MissingDataDesign, n: int, rng: np.random.Generator) -> Sample:
    """Draw ``n`` observations ``(X, W_high)`` from ``design``."""
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    x = rng.uniform(0.0, 1.0, n)
    u = rng.uniform(-1.0, 1.0, n)
    missing = rng.uniform(0.0, 1.0, n) < design.p(x)
    t1s, t2s = design.theta_star
    w_star = t1s + t2s * x + u
    w_high = np.where(missing, INF_SENTINEL, w_star)
    return Sample(x[:, None], {"w_high": w_high})


def boundary_theta1(design: MissingDataDesign, grid_size: int = 10001) -> float:
    """Largest ``theta1`` with ``(theta1, 0)`` in the identified set.

    With ``theta* = (0, 0)`` this is ``min_x p(x) / (1 - p(x))`` on [0, 1].
    """
    if design.theta_star != (0.0, 0.0):
        raise InvalidArgumentError("boundary_theta1 requires theta_star = (0, 0)")

    def ratio(x):
        px = design.p(x)
        with np.errstate(divide="ignore"):
            return np.where(px < 1.0, px / (1.0 - px), np.inf)

    grid = np.linspace(0.0, 1.0, grid_size)
    r = ratio(grid)
    i = int(np.argmin(r))
    best = float(r[i])
    if not np.isfinite(best) or best >= 1.0:
        raise DegenerateDesignError(
            "missingness too high: theta1 is unbounded above in the identified set"
        )
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid_size - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda z: float(ratio(np.array([z]))[0]),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-13},
        )
        best = min(best, float(res.fun))
    return best


def write_sample_csv(sample: Sample, path) -> None:
    names = list(sample.w)
    header = [f"x_{k + 1}" for k in range(sample.d_x)] + names

    def fmt(v):
        if v >= INF_SENTINEL:
            return "INF"
        if v <= NEG_INF_SENTINEL:
            return "-INF"
        return repr(float(v))

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(sample.n):
            row = [repr(float(v)) for v in sample.x[i]]
            row += [fmt(sample.w[name][i]) for name in names]
            writer.writerow(row)


def read_sample_csv(path) -> Sample:
    def parse(tok):
        tok = tok.strip()
        if tok == "INF":
            return INF_SENTINEL
        if tok == "-INF":
            return NEG_INF_SENTINEL
        return float(tok)

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[parse(t) for t in row] for row in reader if row]
    if not rows:
        raise InvalidDataError(f"{path}: no observations")
    xcols = [k for k, h in enumerate(header) if h.startswith("x_")]
    wcols = [k for k, h in enumerate(header) if not h.startswith("x_")]
    data = np.array(rows, dtype=float)
    return Sample(data[:, xcols], {header[k]: data[:, k] for k in wcols})
