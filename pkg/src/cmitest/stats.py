"""Instrument- and kernel-based CvM and KS statistics.

All statistics are built from the negative part ``|t|_- = |min(t, 0)|`` of
weighted sample moments. The instrument-based statistics use

    E_n[m_j(W, theta) g(X)] * omega_j(theta, g)

with ``omega = 1`` (bounded), ``omega = 1 / max(sigma_hat, sigma_n)``
(truncated variance) or ``omega = 1 / max(sigma_hat, (log n)^2 / n)``
(multiscale). The kernel-based statistics use the Nadaraya-Watson estimate
of ``E[m_j | X = x]`` over ``x`` in ``[h/2, 1 - h/2]^d``.

For repeated evaluation on the same data (several specs, one sample) build a
:class:`PreparedScores` once and call :func:`evaluate_prepared`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError, InvalidBandwidthError, InvalidMeasureError, NoDataInWindowError
from .instruments import (
    InstrumentFamily,
    InstrumentGrid,
    MuMeasure,
    enumerate_grid,
    get_kernel,
)

__all__ = [
    "FAMILIES",
    "WEIGHTINGS",
    "RATE_RULES",
    "neg_part",
    "StatisticSpec",
    "StatisticValue",
    "PreparedScores",
    "sample_moment",
    "sample_sd",
    "iv_cvm",
    "iv_ks",
    "grid_ks",
    "kernel_estimate",
    "kern_cvm",
    "kern_ks",
    "compute_statistic",
    "evaluate_prepared",
    "default_instruments",
]

FAMILIES = ("iv_cvm", "iv_ks", "kern_cvm", "kern_ks")
WEIGHTINGS = ("bounded", "trunc_var", "multiscale")
# exponent e in n^{-e}; sigma_n^2 = n^{-e} / 4 and h = n^{-e}
RATE_RULES = {"n^-1/5": 1 / 5, "n^-1/3": 1 / 3, "n^-1/2": 1 / 2}

_CHUNK = 256


def neg_part(t):
    """``|t|_- = |min(t, 0)|``, elementwise."""
    return np.maximum(-np.asarray(t, dtype=float), 0.0)


@dataclass(frozen=True)
class StatisticSpec:
    """Which statistic to compute and its tuning parameters.

    Parameters
    ----------
    family : {"iv_cvm", "iv_ks", "kern_cvm", "kern_ks"}
    p : float
        CvM exponent, ``p >= 1``. Set to ``inf`` for the KS families.
    weighting : {"bounded", "trunc_var", "multiscale"}
        Instrument-based families only.
    sigma_n, sigma_n_rule :
        Truncation for ``trunc_var``: a fixed value, or a rule from
        :data:`RATE_RULES` giving ``sigma_n^2 = n^{-e} / 4``. Defaults to
        ``"n^-1/3"``. The variance-weighted rate is attained only if
        ``sigma_n`` vanishes fast enough: with ``d_X = 1`` that requires
        ``e / 2 > 1 / (4 (1/2 + gamma + 2/p))``. For ``p = 1`` every rule
        qualifies; for KS (``p = inf``) the rules n^-1/5, n^-1/3 and
        n^-1/2 need ``gamma > 2``, ``gamma > 1`` and ``gamma > 1/2``
        respectively.
    bandwidth, bandwidth_rule :
        Kernel families only: fixed ``h`` in (0, 1) or ``h = n^{-e}``.
        Defaults to ``"n^-1/5"``.
    kernel : str
        Kernel for the kernel families (``"uniform"`` or ``"epanechnikov"``).
    resolution : int
        Per-axis resolution of the default instrument grid.
    x_nodes : int
        Per-axis number of midpoint nodes for the kernel statistics.
    weight_fn : callable, optional
        ``omega(x)`` for the kernel families; defaults to 1 on the
        integration range.
    """

    family: str
    p: float = 1.0
    weighting: str = "bounded"
    sigma_n: float | None = None
    sigma_n_rule: str | None = None
    bandwidth: float | None = None
    bandwidth_rule: str | None = None
    kernel: str = "uniform"
    resolution: int = 100
    x_nodes: int = 512
    weight_fn: Callable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        errors = self.validation_errors()
        if errors:
            raise InvalidArgumentError("; ".join(errors))
        if self.family.endswith("_ks"):
            object.__setattr__(self, "p", float("inf"))
        else:
            object.__setattr__(self, "p", float(self.p))
        if self.weighting == "trunc_var" and self.sigma_n is None and self.sigma_n_rule is None:
            object.__setattr__(self, "sigma_n_rule", "n^-1/3")
        if self.is_kernel and self.bandwidth is None and self.bandwidth_rule is None:
            object.__setattr__(self, "bandwidth_rule", "n^-1/5")

    def validation_errors(self) -> list[str]:
        errs = []
        if self.family not in FAMILIES:
            errs.append(f"family must be one of {FAMILIES}, got {self.family!r}")
        if not isinstance(self.p, (int, float, np.number)):
            errs.append(f"p must be a number, got {self.p!r}")
        elif self.family in ("iv_cvm", "kern_cvm") and not (self.p >= 1):
            errs.append("p must be >= 1")
        if self.weighting not in WEIGHTINGS:
            errs.append(f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}")
        if self.family.startswith("kern") and self.weighting != "bounded":
            errs.append("kernel statistics take weight_fn, not an instrument weighting")
        if self.sigma_n is not None and not self.sigma_n > 0:
            errs.append("sigma_n must be > 0")
        for name in ("sigma_n_rule", "bandwidth_rule"):
            rule = getattr(self, name)
            if rule is not None and rule not in RATE_RULES:
                errs.append(f"{name} must be one of {sorted(RATE_RULES)}, got {rule!r}")
        if self.bandwidth is not None and not 0 < self.bandwidth < 1:
            errs.append("bandwidth in (0,1)")
        if self.kernel not in ("uniform", "epanechnikov"):
            errs.append(f"unknown kernel {self.kernel!r}")
        if self.resolution < 2:
            errs.append("resolution must be >= 2")
        if self.x_nodes < 1:
            errs.append("x_nodes must be >= 1")
        return errs

    @property
    def is_kernel(self) -> bool:
        return self.family.startswith("kern")

    def sigma_at(self, n: int) -> float:
        """Variance floor used by the truncated-variance and multiscale weights."""
        if self.weighting == "multiscale":
            if n < 2:
                raise InvalidArgumentError("multiscale weighting needs n >= 2")
            return np.log(n) ** 2 / n
        if self.sigma_n is not None:
            return float(self.sigma_n)
        return float(np.sqrt(n ** -RATE_RULES[self.sigma_n_rule] / 4.0))

    def bandwidth_at(self, n: int) -> float:
        if self.bandwidth is not None:
            h = float(self.bandwidth)
        else:
            h = float(n ** -RATE_RULES[self.bandwidth_rule])
        if not 0 < h < 1:
            raise InvalidBandwidthError(f"bandwidth {h} not in (0, 1): integration range empty")
        return h

    def scale(self, n: int, d_x: int = 1) -> float:
        """Multiplier turning the raw statistic into the one compared with a critical value."""
        if self.is_kernel:
            return float(np.sqrt(n * self.bandwidth_at(n) ** d_x))
        if self.family == "iv_ks" and self.weighting != "bounded":
            if n < 2:
                raise InvalidArgumentError("sqrt(n / log n) scaling needs n >= 2")
            return float(np.sqrt(n / np.log(n)))
        return float(np.sqrt(n))

    @property
    def label(self) -> str:
        parts = [self.family]
        if not self.is_kernel:
            parts.append(self.weighting)
            if self.weighting == "trunc_var":
                parts.append(self.sigma_n_rule or f"sigma={self.sigma_n!r}")
        else:
            parts.append(self.bandwidth_rule or f"h={self.bandwidth!r}")
        if self.family.endswith("cvm"):
            parts.append(f"p={self.p:g}")
        return "/".join(parts)

    def fingerprint(self, n: int, d_x: int = 1, mu: MuMeasure | InstrumentGrid | None = None) -> str:
        items = [
            ("family", self.family),
            ("p", repr(self.p)),
            ("weighting", self.weighting),
            ("sigma_n", repr(self.sigma_n)),
            ("sigma_n_rule", str(self.sigma_n_rule)),
            ("bandwidth", repr(self.bandwidth)),
            ("bandwidth_rule", str(self.bandwidth_rule)),
            ("n", str(n)),
            ("d_x", str(d_x)),
        ]
        if self.is_kernel:
            items += [("kernel", self.kernel), ("x_nodes", str(self.x_nodes))]
            if self.weight_fn is not None:
                items.append(("weight_fn", getattr(self.weight_fn, "__name__", "custom")))
        else:
            items.append(("mu", _describe_measure(mu if mu is not None else default_instruments(self, d_x)[1])))
        return ";".join(f"{k}={v}" for k, v in items)


def _describe_measure(mu) -> str:
    if isinstance(mu, InstrumentGrid):
        digest = hashlib.sha256(np.ascontiguousarray(mu.params).tobytes() + np.ascontiguousarray(mu.weights).tobytes())
        return f"grid:{len(mu.weights)}:{digest.hexdigest()[:12]}"
    return mu.describe()


def fingerprint_hash(fingerprint: str) -> str:
    return hashlib.sha256(fingerprint.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class StatisticValue:
    raw: float
    scaled: float
    fingerprint: str = ""


class PreparedScores:
    """Moment scores ``m(W_i, theta)`` with the sorted/prefix-sum views statistics need."""

    def __init__(self, x, scores):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        scores = np.asarray(scores, dtype=float)
        if scores.ndim == 1:
            scores = scores[:, None]
        if len(x) != len(scores):
            raise InvalidArgumentError("covariates and scores differ in length")
        if len(x) == 0:
            raise InvalidArgumentError("no observations")
        self.x = x
        self.scores = scores

    @classmethod
    def from_model(cls, sample, model, theta) -> "PreparedScores":
        return cls(sample.x, model.evaluate(sample, theta))

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def d_x(self) -> int:
        return self.x.shape[1]

    @property
    def d_y(self) -> int:
        return self.scores.shape[1]

    @cached_property
    def _sorted(self):
        if self.d_x != 1:
            raise InvalidArgumentError("sorted views require d_X = 1")
        order = np.argsort(self.x[:, 0], kind="stable")
        xs = self.x[order, 0]
        sc = self.scores[order]
        zero = np.zeros((1, self.d_y))
        p1 = np.vstack([zero, np.cumsum(sc, axis=0)])
        p2 = np.vstack([zero, np.cumsum(sc * sc, axis=0)])
        return xs, p1, p2

    @cached_property
    def _runs(self):
        """Prefix sums over distinct sorted covariate values."""
        xs, p1, p2 = self._sorted
        keep = np.concatenate([np.diff(xs) > 0, [True]])
        ends = np.flatnonzero(keep) + 1
        return np.concatenate([[0], ends]), p1, p2

    def box_moments(self, s, t):
        """First and second sample moments of ``m_j * 1{s < X < s + t}``, shape ``(G, d_y)``."""
        xs, p1, p2 = self._sorted
        lo = np.searchsorted(xs, s, side="right")
        hi = np.searchsorted(xs, s + t, side="left")
        hi = np.maximum(hi, lo)
        return (p1[hi] - p1[lo]) / self.n, (p2[hi] - p2[lo]) / self.n

    def instrument_moments(self, family: InstrumentFamily, params):
        """Moments for arbitrary instruments by direct evaluation (chunked)."""
        m1, m2 = [], []
        sq = self.scores * self.scores
        for start in range(0, len(params), _CHUNK):
            g = family.evaluate(params[start : start + _CHUNK], self.x)
            m1.append(g @ self.scores)
            m2.append((g * g) @ sq)
        return np.vstack(m1) / self.n, np.vstack(m2) / self.n


def default_instruments(spec: StatisticSpec, d_x: int = 1):
    """Default instrument family and measure for ``d_x``."""
    if d_x == 1:
        return InstrumentFamily("boxes_1d"), MuMeasure.lebesgue_triangle(spec.resolution)
    res = min(spec.resolution, 20)
    family = InstrumentFamily("kernel_loc_scale", kernel=get_kernel(spec.kernel))
    mu = MuMeasure("box", (res,) * (d_x + 1), lower=(0.0,) * (d_x + 1), upper=(1.0,) * (d_x + 1))
    return family, mu


def _grid_moments(prep, family, grid):
    params = grid.params
    if family.kind == "boxes_1d" and prep.d_x == 1:
        return prep.box_moments(params[:, 0], params[:, 1])
    return prep.instrument_moments(family, params)


def _omega(m1, m2, spec, n):
    if spec.weighting == "bounded":
        return 1.0
    sd = np.sqrt(np.maximum(m2 - m1 * m1, 0.0))
    return 1.0 / np.maximum(sd, spec.sigma_at(n))


def _lp_norm(values, weights, p):
    """``(sum_g w_g sum_j values_gj^p)^(1/p)`` for nonnegative ``values``, overflow-safe."""
    top = float(np.max(values)) if values.size else 0.0
    if top == 0.0:
        return 0.0
    inner = np.sum(weights * np.sum((values / top) ** p, axis=1))
    return top * float(inner) ** (1.0 / p)


def _resolve(spec, prep, mu, family):
    dfam, dmu = default_instruments(spec, prep.d_x)
    family = family or dfam
    if isinstance(mu, InstrumentGrid):
        return family, mu, mu
    mu = mu or dmu
    return family, enumerate_grid(mu), mu


def _finish(raw, spec, prep, mu):
    return StatisticValue(
        float(raw),
        float(raw) * spec.scale(prep.n, prep.d_x),
        spec.fingerprint(prep.n, prep.d_x, mu),
    )


def _iv_cvm_prepared(prep, spec, mu=None, family=None):
    family, grid, mu = _resolve(spec, prep, mu, family)
    if len(grid) == 0:
        raise InvalidMeasureError("instrument grid has no nodes")
    m1, m2 = _grid_moments(prep, family, grid)
    v = neg_part(m1 * _omega(m1, m2, spec, prep.n))
    return _finish(_lp_norm(v, grid.weights, spec.p), spec, prep, mu)


def _min_run_sum(prep):
    """Per component, the most negative sum over runs of sorted distinct X (<= 0)."""
    bounds, p1, _ = prep._runs
    prefix = p1[bounds]
    run_max = np.maximum.accumulate(prefix[:-1], axis=0)
    return np.minimum((prefix[1:] - run_max).min(axis=0), 0.0)


def _weighted_run_sup(prep, spec):
    """Max over runs of ``|E_n m_j g|_- / max(sigma_hat_j, floor)``, exhaustive O(K^2)."""
    bounds, p1, p2 = prep._runs
    a1, a2 = p1[bounds], p2[bounds]
    floor = spec.sigma_at(prep.n)
    n = prep.n
    k = len(bounds)
    best = 0.0
    for j in range(prep.d_y):
        c1, c2 = a1[:, j], a2[:, j]
        for start in range(0, k - 1, _CHUNK):
            rows = np.arange(start, min(start + _CHUNK, k - 1))
            m1 = (c1[None, :] - c1[rows, None]) / n
            m2 = (c2[None, :] - c2[rows, None]) / n
            valid = np.arange(k)[None, :] > rows[:, None]
            sd = np.sqrt(np.maximum(m2 - m1 * m1, 0.0))
            val = np.where(valid, neg_part(m1) / np.maximum(sd, floor), 0.0)
            best = max(best, float(val.max()))
    return best


def _iv_ks_prepared(prep, spec, mu=None, family=None, search=True):
    dfam, _ = default_instruments(spec, prep.d_x)
    fam = family or dfam
    exact = search and fam.kind == "boxes_1d" and prep.d_x == 1
    if exact and spec.weighting == "bounded":
        raw = float(np.max(-_min_run_sum(prep))) / prep.n
        return _finish(raw, spec, prep, mu)
    fam, grid, mu_used = _resolve(spec, prep, mu, family)
    m1, m2 = _grid_moments(prep, fam, grid)
    raw = float(np.max(neg_part(m1 * _omega(m1, m2, spec, prep.n)), initial=0.0))
    if exact:
        raw = max(raw, _weighted_run_sup(prep, spec))
    return _finish(raw, spec, prep, mu_used)


def _kernel_nodes(spec, h, d_x):
    m = spec.x_nodes
    axis = h / 2 + (np.arange(m) + 0.5) * (1.0 - h) / m
    mesh = np.meshgrid(*([axis] * d_x), indexing="ij")
    nodes = np.column_stack([g.ravel() for g in mesh])
    cell = ((1.0 - h) / m) ** d_x
    return nodes, cell


def _kernel_curve(prep, nodes, h, kernel):
    """Kernel estimates at ``nodes`` (``nan`` where the window is empty), shape ``(N, d_y)``."""
    if kernel.name == "uniform" and prep.d_x == 1:
        xs, p1, _ = prep._sorted
        lo = np.searchsorted(xs, nodes[:, 0] - h / 2, side="right")
        hi = np.searchsorted(xs, nodes[:, 0] + h / 2, side="left")
        hi = np.maximum(hi, lo)
        num = p1[hi] - p1[lo]
        den = (hi - lo).astype(float)[:, None]
    else:
        num, den = [], []
        for start in range(0, len(nodes), _CHUNK):
            c = nodes[start : start + _CHUNK]
            u = (prep.x[None, :, :] - c[:, None, :]) / h
            kv = np.prod(kernel(u), axis=2)
            num.append(kv @ prep.scores)
            den.append(kv.sum(axis=1, keepdims=True))
        num, den = np.vstack(num), np.vstack(den)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def _kernel_values(prep, spec):
    h = spec.bandwidth_at(prep.n)
    nodes, cell = _kernel_nodes(spec, h, prep.d_x)
    mhat = _kernel_curve(prep, nodes, h, get_kernel(spec.kernel))
    omega = 1.0
    if spec.weight_fn is not None:
        omega = np.asarray(spec.weight_fn(nodes), dtype=float)
        if omega.ndim == 1:
            omega = omega[:, None]
    # empty windows carry no information and contribute zero
    v = np.nan_to_num(neg_part(mhat * omega), nan=0.0)
    return v, cell


def _kern_cvm_prepared(prep, spec, mu=None, family=None):
    v, cell = _kernel_values(prep, spec)
    raw = _lp_norm(v, np.full(len(v), cell), spec.p)
    return _finish(raw, spec, prep, None)


def _kern_ks_prepared(prep, spec, mu=None, family=None):
    v, _ = _kernel_values(prep, spec)
    return _finish(float(np.max(v, initial=0.0)), spec, prep, None)


_DISPATCH = {
    "iv_cvm": _iv_cvm_prepared,
    "iv_ks": _iv_ks_prepared,
    "kern_cvm": _kern_cvm_prepared,
    "kern_ks": _kern_ks_prepared,
}


def evaluate_prepared(prep: PreparedScores, spec: StatisticSpec, mu=None, family=None) -> StatisticValue:
    """Evaluate ``spec`` on precomputed scores; ``mu`` may be a measure or a ready grid."""
    return _DISPATCH[spec.family](prep, spec, mu, family)


def compute_statistic(sample, model, theta, spec, mu=None, family=None) -> StatisticValue:
    return evaluate_prepared(PreparedScores.from_model(sample, model, theta), spec, mu, family)


def _check_family(spec, *allowed):
    if spec.family not in allowed:
        raise InvalidArgumentError(f"spec.family is {spec.family!r}, expected {' or '.join(allowed)}")


def _g_values(sample, g):
    if callable(g):
        vals = g(sample.x[:, 0] if sample.d_x == 1 else sample.x)
    else:
        vals = g
    return np.broadcast_to(np.asarray(vals, dtype=float), (sample.n,))


def sample_moment(sample, model, theta, g) -> np.ndarray:
    """``(1/n) sum_i m(W_i, theta) g(X_i)``; ``g`` is a callable or the vector ``g(X_i)``."""
    scores = model.evaluate(sample, theta)
    return scores.T @ _g_values(sample, g) / sample.n


def sample_sd(sample, model, theta, g, j: int = 0) -> float:
    """``{E_n[(m_j g)^2] - (E_n m_j g)^2}^{1/2}``, clamped at zero."""
    prod = model.evaluate(sample, theta)[:, j] * _g_values(sample, g)
    var = np.mean(prod * prod) - np.mean(prod) ** 2
    return float(np.sqrt(max(var, 0.0)))


def iv_cvm(sample, model, theta, spec, mu=None, family=None) -> StatisticValue:
    _check_family(spec, "iv_cvm")
    return compute_statistic(sample, model, theta, spec, mu, family)


def iv_ks(sample, model, theta, spec, family=None, mu=None) -> StatisticValue:
    _check_family(spec, "iv_ks")
    return compute_statistic(sample, model, theta, spec, mu, family)


def grid_ks(sample, model, theta, spec, mu=None, family=None) -> StatisticValue:
    """IV-KS restricted to the nodes of the instrument grid (no interval search)."""
    _check_family(spec, "iv_ks")
    return _iv_ks_prepared(PreparedScores.from_model(sample, model, theta), spec, mu, family, search=False)


def kern_cvm(sample, model, theta, spec) -> StatisticValue:
    _check_family(spec, "kern_cvm")
    return compute_statistic(sample, model, theta, spec)


def kern_ks(sample, model, theta, spec) -> StatisticValue:
    _check_family(spec, "kern_ks")
    return compute_statistic(sample, model, theta, spec)


def kernel_estimate(sample, model, theta, x, h, kernel="uniform") -> np.ndarray:
    """Nadaraya-Watson estimate of ``E[m(W, theta) | X = x]``.

    Raises
    ------
    NoDataInWindowError
        If no observation receives positive kernel weight at ``x``.
    """
    kernel = get_kernel(kernel)
    scores = model.evaluate(sample, theta)
    u = (sample.x - np.atleast_1d(np.asarray(x, dtype=float))[None, :]) / h
    kv = np.prod(kernel(u), axis=1)
    den = kv.sum()
    if not den > 0:
        raise NoDataInWindowError(f"no observations within bandwidth {h} of {x}")
    return kv @ scores / den
