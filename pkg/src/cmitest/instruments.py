"""Instrument classes, measures over them, and their discretization.

Two families are supported:

``boxes_1d``
    ``g(x) = 1{s < x < s + t}`` indexed by ``0 <= s <= s + t <= 1``.
``kernel_loc_scale``
    ``g(x) = k((x - center) / h)`` indexed by ``(center, h)``, with ``k`` a
    product of one-dimensional kernels supported on ``[-1/2, 1/2]``.

With the uniform kernel the two coincide under ``center = s + t/2``,
``h = t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import InvalidArgumentError, InvalidMeasureError

__all__ = [
    "Kernel",
    "UNIFORM",
    "EPANECHNIKOV",
    "get_kernel",
    "InstrumentFamily",
    "MuMeasure",
    "InstrumentGrid",
    "enumerate_grid",
    "IntervalOptimum",
    "exact_instrument_supremum_index",
    "box_to_kernel_params",
]


@dataclass(frozen=True)
class Kernel:
    """Bounded nonnegative kernel supported on ``[-1/2, 1/2]`` with unit mass."""

    name: str
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def __call__(self, u):
        return self.func(np.asarray(u, dtype=float))

    @property
    def mass(self) -> float:
        return _kernel_moment(self, "mass")

    @property
    def l2(self) -> float:
        """``int k(u)^2 du``."""
        return _kernel_moment(self, "l2")

    def abs_moment(self, gamma: float) -> float:
        """``int |u|^gamma k(u) du``."""
        return float(integrate.quad(lambda u: abs(u) ** gamma * self(u), -0.5, 0.5, points=[0.0])[0])


@lru_cache(maxsize=None)
def _kernel_moment(kernel, what):
    if what == "mass":
        f = kernel
    else:
        f = lambda u: kernel(u) ** 2  # noqa: E731
    return float(integrate.quad(f, -0.5, 0.5)[0])


def _uniform(u):
    return (np.abs(u) < 0.5).astype(float)


def _epanechnikov(u):
    return np.where(np.abs(u) < 0.5, 1.5 * (1.0 - 4.0 * u * u), 0.0)


UNIFORM = Kernel("uniform", _uniform)
EPANECHNIKOV = Kernel("epanechnikov", _epanechnikov)
_KERNELS = {"uniform": UNIFORM, "epanechnikov": EPANECHNIKOV}


def get_kernel(name) -> Kernel:
    if isinstance(name, Kernel):
        return name
    try:
        return _KERNELS[name]
    except KeyError:
        raise InvalidArgumentError(f"unknown kernel {name!r}; expected one of {sorted(_KERNELS)}")


def box_to_kernel_params(s, t):
    """Map box parameters ``(s, t)`` to ``(center, h)``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return s + t / 2.0, t


@dataclass(frozen=True)
class InstrumentFamily:
    kind: str = "boxes_1d"
    kernel: Kernel = UNIFORM
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        if self.kind not in ("boxes_1d", "kernel_loc_scale"):
            raise InvalidArgumentError(f"unknown instrument kind {self.kind!r}")
        object.__setattr__(self, "kernel", get_kernel(self.kernel))
        if not self.upper > self.lower:
            raise InvalidArgumentError("instrument domain must have upper > lower")

    def evaluate(self, params, x) -> np.ndarray:
        """Instrument values, shape ``(G, n)``, for parameter rows ``params``.

        ``params`` is ``(G, 2)`` of ``(s, t)`` for boxes, and ``(G, d + 1)`` of
        ``(center_1..center_d, h)`` for kernels. ``x`` is ``(n,)`` or ``(n, d)``.
        """
        params = np.atleast_2d(np.asarray(params, dtype=float))
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if self.kind == "boxes_1d":
            if x.shape[1] != 1:
                raise InvalidArgumentError("boxes_1d instruments require d_X = 1")
            s, t = params[:, :1], params[:, 1:2]
            xv = x[:, 0][None, :]
            return ((s < xv) & (xv < s + t)).astype(float)
        centers, h = params[:, :-1], params[:, -1]
        if centers.shape[1] != x.shape[1]:
            raise InvalidArgumentError("instrument centers and covariates differ in dimension")
        with np.errstate(divide="ignore", invalid="ignore"):
            u = (x[None, :, :] - centers[:, None, :]) / h[:, None, None]
        vals = np.prod(self.kernel(u), axis=2)
        vals[h <= 0] = 0.0
        return vals


@dataclass(frozen=True)
class MuMeasure:
    """A measure over instrument parameters, given by a density on a bounded support.

    ``support="triangle"`` is the set ``{(s, t): s, t >= 0, s + t <= 1}`` used
    with ``boxes_1d``; ``support="box"`` is the rectangle ``[lower, upper]``
    (one entry per parameter axis). A density of ``None`` means Lebesgue.
    """

    support: str = "triangle"
    resolution: tuple = (100, 100)
    density: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)
    lower: tuple = (0.0, 0.0)
    upper: tuple = (1.0, 1.0)
    label: str = ""

    def __post_init__(self):
        if not self.label:
            # the label stands in for the density in equality and hashing
            label = "lebesgue" if self.density is None else f"density-{id(self.density):x}"
            object.__setattr__(self, "label", label)
        res = self.resolution
        if np.isscalar(res):
            res = (int(res),) * len(self.lower)
        object.__setattr__(self, "resolution", tuple(int(r) for r in res))
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if self.support not in ("triangle", "box"):
            raise InvalidArgumentError(f"unknown support {self.support!r}")
        if not (len(self.resolution) == len(self.lower) == len(self.upper)):
            raise InvalidArgumentError("resolution, lower and upper must have equal length")
        if self.support == "triangle" and len(self.lower) != 2:
            raise InvalidArgumentError("triangle support is two-dimensional")

    @classmethod
    def lebesgue_triangle(cls, resolution: int = 100) -> "MuMeasure":
        return cls("triangle", (resolution, resolution))

    def describe(self) -> str:
        res = "x".join(str(r) for r in self.resolution)
        return f"{self.support}:{self.label}:{res}"

    def density_at(self, params) -> np.ndarray:
        if self.density is None:
            return np.ones(len(params))
        return np.asarray(self.density(params), dtype=float)


@dataclass(frozen=True)
class InstrumentGrid:
    """Quadrature nodes (instrument parameters) and nonnegative weights."""

    params: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))


def enumerate_grid(mu: MuMeasure) -> InstrumentGrid:
    """Midpoint-rule nodes on ``mu``'s support with weights ``f_mu(node) * area``.

    For the triangle, cells cut by the diagonal ``s + t = 1`` are cut exactly
    in half (they are aligned with the grid when both axes share the
    resolution); their node is the centroid of the retained half.
    """
    return _enumerate_grid_cached(mu)


@lru_cache(maxsize=64)
def _enumerate_grid_cached(mu):
    if min(mu.resolution) < 2:
        raise InvalidArgumentError("grid resolution must be >= 2 per axis")
    lower = np.array(mu.lower)
    upper = np.array(mu.upper)
    if np.any(upper <= lower):
        raise InvalidMeasureError("measure support is empty")
    if mu.support == "triangle":
        if mu.resolution[0] != mu.resolution[1]:
            raise InvalidArgumentError("triangle grid needs equal resolution on both axes")
        r = mu.resolution[0]
        i, j = np.meshgrid(np.arange(r), np.arange(r), indexing="ij")
        i, j = i.ravel(), j.ravel()
        inside = i + j <= r - 2
        diag = i + j == r - 1
        full = np.column_stack([(i[inside] + 0.5) / r, (j[inside] + 0.5) / r])
        half = np.column_stack([(i[diag] + 1 / 3) / r, (j[diag] + 1 / 3) / r])
        params = np.vstack([full, half])
        area = np.concatenate([np.full(len(full), 1.0 / r**2), np.full(len(half), 0.5 / r**2)])
    else:
        axes = [
            lo + (np.arange(m) + 0.5) * (hi - lo) / m
            for lo, hi, m in zip(lower, upper, mu.resolution)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        params = np.column_stack([g.ravel() for g in mesh])
        area = np.full(len(params), np.prod((upper - lower) / np.array(mu.resolution)))
    dens = mu.density_at(params)
    if np.any(dens < 0):
        raise InvalidMeasureError("measure density must be nonnegative")
    weights = dens * area
    params.setflags(write=False)
    weights.setflags(write=False)
    return InstrumentGrid(params, weights)


@dataclass(frozen=True)
class IntervalOptimum:
    s: float
    t: float
    value: float


def _group_sorted(x, scores):
    """Sort by ``x`` and merge tied covariate values (they cannot be separated)."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    sc = scores[order]
    keep = np.concatenate([[True], np.diff(xs) > 0])
    starts = np.flatnonzero(keep)
    return xs[starts], np.add.reduceat(sc, starts, axis=0)


def _block_endpoints(ux, i, j, lower, upper):
    """Open interval containing exactly the unique values ``ux[i:j]``."""
    s = lower if i == 0 else 0.5 * (ux[i - 1] + ux[i])
    e = upper if j == len(ux) else 0.5 * (ux[j - 1] + ux[j])
    return s, e - s


def exact_instrument_supremum_index(
    sample, scores, lower: float = 0.0, upper: float = 1.0
) -> IntervalOptimum:
    """Interval ``(s, s + t)`` minimizing ``E_n[score_i 1{s < X_i < s + t}]``.

    Any interval selects a contiguous run of the sorted distinct covariate
    values, so the minimum over all intervals equals the minimum over runs,
    found in one pass over prefix sums. The empty interval (value 0) is
    always admissible, so the returned value is ``<= 0``.
    """
    x = sample.x if hasattr(sample, "x") else np.asarray(sample, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise InvalidArgumentError("exact interval search requires d_X = 1")
        x = x[:, 0]
    scores = np.asarray(scores, dtype=float).ravel()
    n = len(x)
    if n == 0:
        raise InvalidArgumentError("no observations")
    if len(scores) != n:
        raise InvalidArgumentError("scores and covariates differ in length")
    ux, b = _group_sorted(x, scores)
    prefix = np.concatenate([[0.0], np.cumsum(b)])
    run_max = np.maximum.accumulate(prefix[:-1])
    gaps = prefix[1:] - run_max
    jm = int(np.argmin(gaps))
    if gaps[jm] >= 0:
        return IntervalOptimum(lower, 0.0, 0.0)
    im = int(np.argmax(prefix[: jm + 1]))
    s, t = _block_endpoints(ux, im, jm + 1, lower, upper)
    return IntervalOptimum(float(s), float(t), float(gaps[jm] / n))
