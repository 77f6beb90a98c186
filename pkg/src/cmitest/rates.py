"""Local-power rates and limiting functionals.

``rate_exponent`` gives ``q`` such that alternatives at distance ``a n^{-q}``
(``a (n / log n)^{-q}`` for the variance-weighted KS statistic) from a
boundary point are detected with nontrivial power.

The ``lambda_*`` functionals are the deterministic limits of the scaled
CvM statistics along those alternatives when, near a binding point ``x_k``,
the conditional mean behaves like ``psi(direction) |x - x_k|^gamma`` and the
drift is ``mbar_theta . a``. They are evaluated for ``d_X = 1`` by nested
Gauss-Legendre quadrature on a truncation box outside which the integrand
vanishes identically; ``lambda_kern_tilde_radial`` is a closed form valid in
any dimension for constant ``psi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .errors import EnlargeDomainError, InvalidArgumentError, UnsupportedSpecError
from .instruments import Kernel, get_kernel

__all__ = [
    "RateSpec",
    "rate_exponent",
    "rate_at_n",
    "optimal_bandwidth_exponent",
    "LocalModelParams",
    "lambda_bdd",
    "lambda_var",
    "lambda_kern",
    "lambda_kern_tilde",
    "lambda_kern_tilde_radial",
    "predicted_scaled_limit",
    "rates_rows",
]


@dataclass(frozen=True)
class RateSpec:
    family: str
    weighting: str = "bounded"
    p: float = 1.0
    d_x: int = 1
    gamma: float = 2.0
    s: float | None = None

    def __post_init__(self):
        if self.family not in ("iv_cvm", "iv_ks", "kern_cvm", "kern_ks"):
            raise UnsupportedSpecError(f"unknown family {self.family!r}")
        if not self.gamma > 0:
            raise InvalidArgumentError("gamma must be > 0")
        if not self.p >= 1:
            raise InvalidArgumentError("p must be >= 1")
        if self.d_x < 1 or int(self.d_x) != self.d_x:
            raise InvalidArgumentError("d_x must be a positive integer")
        if self.family.startswith("kern"):
            if self.s is None or not 0 < self.s < 1 / self.d_x:
                raise InvalidArgumentError("kernel rates need a bandwidth exponent 0 < s < 1/d_x")
            if self.weighting != "bounded":
                raise UnsupportedSpecError("kernel statistics have no instrument weighting")
        elif self.weighting not in ("bounded", "trunc_var", "multiscale"):
            raise UnsupportedSpecError(f"unknown weighting {self.weighting!r}")


def _inv(p):
    return 0.0 if math.isinf(p) else 1.0 / p


def rate_exponent(spec: RateSpec) -> float:
    """Exponent ``q`` of the detection rate ``r_n``."""
    g, d, ip = spec.gamma, spec.d_x, _inv(spec.p)
    weighted = spec.weighting in ("trunc_var", "multiscale")
    if spec.family == "iv_cvm":
        dim = d / 2 if weighted else d
        return g / (2 * (dim + g + (d + 1) * ip))
    if spec.family == "iv_ks":
        dim = d / 2 if weighted else d
        return g / (2 * (dim + g))
    s = spec.s
    if spec.family == "kern_cvm":
        knee = 1 / (2 * (g + d * ip + d / 2))
        return s * g if s < knee else (1 - s * d) / (2 * (1 + d * ip / g))
    return min(s * g, (1 - s * d) / 2)


def rate_at_n(spec: RateSpec, n: float) -> float:
    """The rate ``r_n`` itself, logarithmic factors included."""
    q = rate_exponent(spec)
    if spec.family == "iv_ks" and spec.weighting != "bounded":
        return (n / math.log(n)) ** -q
    if spec.family == "kern_cvm":
        h = n ** -spec.s
        ip = _inv(spec.p)
        return max((n * h**spec.d_x) ** (-1 / (2 * (1 + spec.d_x * ip / spec.gamma))), h**spec.gamma)
    if spec.family == "kern_ks":
        h = n ** -spec.s
        return max((n * h**spec.d_x / math.log(n)) ** -0.5, h**spec.gamma)
    return n**-q


def optimal_bandwidth_exponent(p: float, d_x: int, gamma: float) -> tuple[float, float]:
    """Bandwidth exponent ``s*`` maximizing kernel-CvM power, and the resulting ``q``."""
    s = 1 / (2 * (gamma + d_x * _inv(p) + d_x / 2))
    return s, s * gamma


@dataclass(frozen=True)
class LocalModelParams:
    """Local description of one binding component ``(j, k)``.

    ``psi`` is a constant or a callable of the direction (``-1`` or ``+1`` in
    one dimension). ``mbar_theta`` is the derivative of the conditional mean
    in ``theta`` at the binding point, so the drift is ``mbar_theta . a``.
    """

    gamma: float = 2.0
    psi: float | Callable = 1.0
    mbar_theta: float | tuple = -1.0
    f_x: float = 1.0
    f_mu: float = 1.0
    s2: float = 1.0
    omega: float = 1.0
    kernel: Kernel = field(default="uniform")
    d_x: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kernel", get_kernel(self.kernel))
        if not self.gamma > 0:
            raise InvalidArgumentError("gamma must be > 0")
        if self.psi_lower <= 0:
            raise InvalidArgumentError("psi must be bounded away from zero")
        if self.f_x < 0 or self.f_mu < 0:
            raise InvalidArgumentError("densities must be nonnegative")

    def psi_at(self, direction):
        if callable(self.psi):
            return np.asarray(self.psi(direction), dtype=float)
        return np.full(np.shape(direction), float(self.psi))

    @property
    def psi_lower(self) -> float:
        if callable(self.psi):
            return float(np.min(self.psi(np.array([-1.0, 1.0]))))
        return float(self.psi)

    def drift(self, a) -> float:
        return float(np.dot(np.atleast_1d(self.mbar_theta), np.atleast_1d(a)))

    @property
    def w(self) -> float:
        """Variance weight ``(s^2 f_X int k^2)^{-1/2}``."""
        return (self.s2 * self.f_x * self.kernel.l2) ** -0.5


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_PANEL_X, _PANEL_W = np.polynomial.legendre.leggauss(4)


def _composite(lo, hi, panels):
    """Composite 4-point Gauss-Legendre nodes and weights on ``[lo, hi]``."""
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * _PANEL_X[None, :]).ravel()
    weights = (half[:, None] * _PANEL_W[None, :]).ravel()
    return nodes, weights


def _bracket_avg(params, centers, h, c):
    """``int [psi |x|^gamma + c] k((x - center)/h) dx / h`` for each center (d_X = 1).

    The u-integral over the kernel support is split at the kink ``x = 0``.
    """
    centers = np.asarray(centers, dtype=float)
    k = params.kernel
    h = np.broadcast_to(np.asarray(h, dtype=float), centers.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        u0 = np.clip(np.where(h > 0, -centers / h, 0.0), -0.5, 0.5)
    total = np.zeros(centers.shape)
    for lo, hi in ((np.full(centers.shape, -0.5), u0), (u0, np.full(centers.shape, 0.5))):
        half = 0.5 * (hi - lo)
        u = 0.5 * (hi + lo)[..., None] + half[..., None] * _GL_X
        x = centers[..., None] + h[..., None] * u
        val = params.psi_at(np.sign(x)) * np.abs(x) ** params.gamma + c
        total += np.sum(val * k(u) * _GL_W, axis=-1) * half
    return total


def _radii(params, c):
    """Analytic truncation: bracket average is >= 0 outside these radii."""
    r0 = (abs(c) / params.psi_lower) ** (1 / params.gamma)
    m_g = params.kernel.abs_moment(params.gamma)
    hmax = (abs(c) * params.kernel.mass / (params.psi_lower * m_g)) ** (1 / params.gamma)
    return r0, hmax


def _check_edges(values, tol=1e-12):
    if np.max(values, initial=0.0) > tol:
        raise EnlargeDomainError("integrand nonzero on the truncation boundary")


def _require_1d(params):
    if params.d_x != 1:
        raise UnsupportedSpecError("numerical lambda functionals are implemented for d_X = 1")


def _instrument_lambda(params, c, p, h_power, weight, panels, pad):
    r0, hmax = _radii(params, c)
    H = pad * hmax
    X = pad * (r0 + hmax / 2)
    xt, wx = _composite(-X, X, panels)
    # h = H v^2 grades the nodes toward h = 0
    v, wv = _composite(0.0, 1.0, panels)
    hs = H * v * v
    dh = 2 * H * v * wv
    total = 0.0
    for h, w_h in zip(hs, dh):
        inner = h * _bracket_avg(params, xt, h, c) * params.f_x * weight * h**h_power
        total += w_h * np.sum(wx * neg_p(inner, p))
    hh = np.linspace(0.0, H, 65)
    edges = [
        _bracket_avg(params, np.full(hh.shape, X), hh, c),
        _bracket_avg(params, np.full(hh.shape, -X), hh, c),
        _bracket_avg(params, np.linspace(-X, X, 257), H, c),
    ]
    _check_edges(neg_p(np.concatenate(edges), 1))
    return float(total) * params.f_mu


def neg_p(v, p):
    return np.maximum(-v, 0.0) ** p


def lambda_bdd(params: LocalModelParams, a, p: float = 1.0, panels: int = 200, pad: float = 1.5) -> float:
    """Limit functional for the bounded-weight instrument CvM statistic."""
    _require_1d(params)
    c = params.drift(a)
    if c >= 0:
        return 0.0
    return _instrument_lambda(params, c, p, 0.0, 1.0, panels, pad)


def lambda_var(params: LocalModelParams, a, p: float = 1.0, panels: int = 200, pad: float = 1.5) -> float:
    """Limit functional for the truncated-variance-weight instrument CvM statistic."""
    _require_1d(params)
    c = params.drift(a)
    if c >= 0:
        return 0.0
    return _instrument_lambda(params, c, p, -params.d_x / 2, params.w, panels, pad)


def lambda_kern(params: LocalModelParams, a, c_h: float, p: float = 1.0, panels: int = 2000, pad: float = 1.5) -> float:
    """Limit functional for the kernel CvM statistic at bandwidth constant ``c_h``."""
    _require_1d(params)
    if not c_h > 0:
        raise InvalidArgumentError("c_h must be > 0")
    c = params.drift(a)
    if c >= 0:
        return 0.0
    r0, _ = _radii(params, c)
    X = pad * (r0 + c_h / 2)
    xt, wx = _composite(-X, X, panels)
    inner = _bracket_avg(params, xt, c_h, c) * params.omega
    _check_edges(neg_p(_bracket_avg(params, np.array([-X, X]), c_h, c), 1))
    return float(np.sum(wx * neg_p(inner, p)))


def lambda_kern_tilde(params: LocalModelParams, a, p: float = 1.0) -> float:
    """Small-bandwidth kernel functional ``int |[psi |v|^gamma + c] omega|_-^p dv`` (d_X = 1)."""
    _require_1d(params)
    c = params.drift(a)
    if c >= 0:
        return 0.0
    total = 0.0
    for direction in (-1.0, 1.0):
        psi = float(params.psi_at(np.array([direction]))[0])
        r = (abs(c) / psi) ** (1 / params.gamma)
        v, w = _composite(0.0, r, 64)
        total += np.sum(w * neg_p((psi * v**params.gamma + c) * params.omega, p))
    return float(total)


def lambda_kern_tilde_radial(params: LocalModelParams, a, p: float = 1.0) -> float:
    """Closed form of ``lambda_kern_tilde`` for constant ``psi`` in any dimension.

    With ``R = (|c| / psi)^{1/gamma}`` the integral is
    ``omega^p S_{d-1} |c|^p R^d B(d / gamma, p + 1) / gamma``.
    """
    if callable(params.psi):
        raise UnsupportedSpecError("radial reduction needs a constant psi")
    c = params.drift(a)
    if c >= 0:
        return 0.0
    d, g = params.d_x, params.gamma
    r = (abs(c) / params.psi) ** (1 / g)
    sphere = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    return params.omega**p * sphere * abs(c) ** p * r**d * special.beta(d / g, p + 1) / g


def predicted_scaled_limit(
    components, a, p: float = 1.0, family: str = "iv_cvm", weighting: str = "bounded",
    c_h: float | None = None, branch: str = "knee",
) -> float:
    """Aggregate ``(sum over binding (j, k) of lambda)^{1/p}`` for one family.

    ``components`` is a sequence of :class:`LocalModelParams`. For the kernel
    CvM family the result carries the ``c_h^{d/2}`` factor; ``branch`` picks
    ``lambda_kern`` (``"knee"``, bandwidth at the optimal exponent) or
    ``lambda_kern_tilde`` (``"fast"``, bandwidth shrinking faster).
    """
    comps = list(components)
    if family == "iv_cvm":
        fn = lambda_var if weighting in ("trunc_var", "multiscale") else lambda_bdd
        total = sum(fn(cp, a, p) for cp in comps)
        return total ** (1 / p)
    if family == "kern_cvm":
        if c_h is None:
            raise InvalidArgumentError("kernel limit needs c_h")
        if branch == "knee":
            total = sum(lambda_kern(cp, a, c_h, p) for cp in comps)
        else:
            total = sum(lambda_kern_tilde(cp, a, p) for cp in comps)
        d = comps[0].d_x if comps else 1
        return c_h ** (d / 2) * total ** (1 / p)
    raise UnsupportedSpecError(f"no CvM limit functional for family {family!r}")


def rates_rows(tuples, n_list, families=None):
    """Rows ``(family, weighting, p, d_X, gamma, s, n, q, r_n_at_n)`` for the rates table.

    ``tuples`` are ``(p, d_x, gamma)``; kernel rows use the CvM-optimal
    bandwidth exponent for that tuple.
    """
    families = families or [
        ("iv_cvm", "bounded"), ("iv_cvm", "trunc_var"),
        ("iv_ks", "bounded"), ("iv_ks", "trunc_var"),
        ("kern_cvm", "bounded"), ("kern_ks", "bounded"),
    ]
    rows = []
    for p, d, g in tuples:
        s_opt, _ = optimal_bandwidth_exponent(p, d, g)
        for fam, wt in families:
            s = s_opt if fam.startswith("kern") else None
            spec = RateSpec(fam, wt, p if fam.endswith("cvm") else math.inf, d, g, s)
            q = rate_exponent(spec)
            for n in n_list:
                rows.append((fam, wt, spec.p, d, g, s, n, q, rate_at_n(spec, n)))
    return rows
