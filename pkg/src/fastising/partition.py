"""Log partition function approximations for the homogeneous Ising model.

Configurations are grouped by their number of active vertices ``ell``.
For each group the distribution of induced edges is replaced by a
normal law truncated to its feasible window, which yields an ``O(n)``
sum (``phi``), a variant using a parity-corrected independent-degree
MGF for small groups (``h_phi``), and an integral form evaluated by
quadrature after Stirling's approximation of the binomial coefficients
(``tilde_phi``).

Everything is carried in log space: at ``n = 17632`` and ``beta = 10``
the partition function is far outside the double-precision range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from . import edgestats
from .edgestats import log_binom, log_normal_pdf, window_arrays
from .errors import ConfigurationError, InputError, NumericalDomainError

METHODS = ("phi", "h_phi", "tilde_phi", "one_nn_exact", "brute", "path_sampling")
_METHOD_ALIASES = {"phi": "phi", "hphi": "h_phi", "h_phi": "h_phi", "tilde": "tilde_phi", "tilde_phi": "tilde_phi"}

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class IsingParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not math.isfinite(self.alpha) or not math.isfinite(self.beta):
            raise InputError("alpha and beta must be finite")
        if self.beta < 0:
            raise InputError("beta must be non-negative (antiferromagnetic models are not supported)")

    def alpha_prime(self, k: int) -> float:
        return self.alpha - k * self.beta

    def reflected(self) -> "IsingParams":
        return IsingParams(abs(self.alpha), self.beta)


def as_params(params) -> IsingParams:
    if isinstance(params, IsingParams):
        return params
    alpha, beta = params
    return IsingParams(float(alpha), float(beta))


@dataclass(frozen=True)
class LogZEstimate:
    log_z: float
    method: str
    quad_points: int = 0

    def __float__(self):
        return self.log_z


@dataclass(frozen=True)
class QuadConfig:
    points: int = 2048
    rule: str = "gauss-legendre"

    def __post_init__(self):
        if self.points < 16:
            raise ConfigurationError("quadrature needs at least 16 points")
        if self.rule not in ("gauss-legendre", "trapezoid"):
            raise ConfigurationError(f"unknown quadrature rule {self.rule!r}")


DEFAULT_QUAD = QuadConfig()


def _check_nk(n: int, k: int):
    if n < 3:
        raise InputError(f"n={n} must be at least 3")
    if not 1 <= k < n - 1:
        raise InputError(f"degree k={k} must lie in [1, n-2] for n={n}")


# -- shared term builders ---------------------------------------------------


def log_a_phi(params, n: int, k: int) -> float:
    """Log of the all-inactive, all-active and single-active contributions."""
    p = as_params(params)
    # alpha' n + beta k n collapses to alpha n
    return float(logsumexp([0.0, p.alpha * n, math.log(n) + p.alpha_prime(k)]))


def sum_terms(params, n: int, k: int, h: int = 2) -> dict:
    """Per-``ell`` log summands ``log C(n, ell) + g(ell) + log Delta_Phi(ell)``."""
    p = as_params(params)
    ell = np.arange(h, n, dtype=float)
    w = window_arrays(n, k, ell, p.alpha, p.beta)
    w["log_term"] = log_binom(n, ell) + w["g"] + w["log_dPhi"]
    return w


def log_sigma(h: int, params, n: int, k: int) -> float:
    _check_nk(n, k)
    if not 2 <= h <= n - 1:
        raise InputError(f"h={h} outside [2, n-1]")
    return float(logsumexp(sum_terms(params, n, k, h)["log_term"]))


@lru_cache(maxsize=32)
def _unit_rule(points: int, rule: str):
    if rule == "gauss-legendre":
        x, w = np.polynomial.legendre.leggauss(points)
        return (x + 1.0) / 2.0, w / 2.0
    x = np.linspace(0.0, 1.0, points)
    w = np.full(points, 1.0 / (points - 1))
    w[[0, -1]] *= 0.5
    return x, w


def quad_nodes(n: int, k: int, quad: QuadConfig = DEFAULT_QUAD):
    """Nodes in ``ell`` and weights in ``y = ell / n`` over ``[2, n - 1]``.

    The window limits have kinks at ``ell = k + 1`` and ``ell = n - k``, so
    the interval is split there and each panel gets its own rule.
    """
    cuts = sorted({2.0, float(n - 1)} | {c for c in (k + 1.0, float(n - k)) if 2.0 < c < n - 1})
    ux, uw = _unit_rule(quad.points, quad.rule)
    ells, weights = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        ells.append(a + (b - a) * ux)
        weights.append((b - a) * uw / n)
    return np.concatenate(ells), np.concatenate(weights)


def log_stirling_binom(n: int, ell):
    """Stirling form of ``log C(n, ell)``: ``-0.5 log(2 pi n) + h(ell / n)``."""
    y = np.asarray(ell, dtype=float) / n
    h = -(n * (1.0 - y) + 0.5) * np.log1p(-y) - (n * y + 0.5) * np.log(y)
    return -0.5 * (_LOG_2PI + math.log(n)) + h


def integral_terms(params, n: int, k: int, quad: QuadConfig = DEFAULT_QUAD) -> dict:
    """Quadrature nodes and log integrands shared by the integral estimators.

    ``log_base`` is the log of ``sqrt(n / 2 pi) exp{h(y)} e^{g} Delta_Phi``
    plus the log quadrature weight, so that ``logsumexp(log_base)`` is
    ``J_{1/2}`` and adding ``log y`` gives ``J_{-1/2}``.
    """
    p = as_params(params)
    ell, wy = quad_nodes(n, k, quad)
    w = window_arrays(n, k, ell, p.alpha, p.beta)
    # sqrt(n/2pi) e^{h(y)} = n * Stirling C(n, ny)
    w["log_base"] = math.log(n) + log_stirling_binom(n, ell) + w["g"] + w["log_dPhi"] + np.log(wy)
    w["y"] = ell / n
    w["n_nodes"] = ell.size
    if not np.all(np.isfinite(w["log_base"]) | (w["log_base"] == -np.inf)):
        bad = int(np.flatnonzero(~np.isfinite(w["log_base"]) & (w["log_base"] != -np.inf))[0])
        raise NumericalDomainError(
            f"non-finite log integrand at y={w['y'][bad]!r}: {w['log_base'][bad]!r}"
        )
    return w


def endpoint_terms(params, n: int, k: int) -> dict:
    """Window quantities at ``ell = 2`` and ``ell = n - 1`` (Euler-Maclaurin ends)."""
    p = as_params(params)
    return window_arrays(n, k, np.array([2.0, n - 1.0]), p.alpha, p.beta)


def log_b_phi(params, n: int, k: int) -> float:
    e = endpoint_terms(params, n, k)
    n2 = n * (n - 1) / 2.0
    lt = e["g"] + e["log_dPhi"]
    return float(math.log(0.5) + np.logaddexp(math.log(n2) + lt[0], math.log(n) + lt[1]))


# -- estimators (alpha >= 0 cores) ------------------------------------------


def _log_z_phi(p: IsingParams, n: int, k: int) -> float:
    return float(np.logaddexp(log_a_phi(p, n, k), logsumexp(sum_terms(p, n, k)["log_term"])))


def _log_z_h_phi(p: IsingParams, n: int, k: int) -> float:
    split = math.isqrt(n)
    parts = [log_a_phi(p, n, k)]
    a_prime = p.alpha_prime(k)
    for ell in range(2, split):
        parts.append(float(log_binom(n, ell)) + a_prime * ell + edgestats.mgf_even(p.beta, ell, n, k))
    parts.append(float(logsumexp(sum_terms(p, n, k, h=split)["log_term"])))
    return float(logsumexp(parts))


def _log_z_tilde(p: IsingParams, n: int, k: int, quad: QuadConfig) -> tuple[float, int]:
    it = integral_terms(p, n, k, quad)
    log_j = logsumexp(it["log_base"])
    return float(logsumexp([log_a_phi(p, n, k), log_b_phi(p, n, k), log_j])), int(it["n_nodes"])


def _reflect(p: IsingParams, n: int):
    """Return positive-field params and the additive log-Z shift ``alpha n`` for alpha < 0."""
    if p.alpha < 0:
        return p.reflected(), p.alpha * n
    return p, 0.0


def log_z_phi(params, n: int, k: int) -> LogZEstimate:
    """Normal edge-proportion estimate (``O(n)`` sum)."""
    _check_nk(n, k)
    p, shift = _reflect(as_params(params), n)
    return LogZEstimate(shift + _log_z_phi(p, n, k), "phi")


def log_z_h_phi(params, n: int, k: int) -> LogZEstimate:
    """Hypergeometric-and-normal estimate: parity-corrected MGF for ``ell < floor(sqrt n)``."""
    _check_nk(n, k)
    if n < 9:
        raise InputError("h_phi needs n >= 9")
    p, shift = _reflect(as_params(params), n)
    return LogZEstimate(shift + _log_z_h_phi(p, n, k), "h_phi")


def log_z_tilde_phi(params, n: int, k: int, quad: QuadConfig = DEFAULT_QUAD) -> LogZEstimate:
    """Integral (Euler-Maclaurin + Stirling) form of the normal estimate."""
    _check_nk(n, k)
    p, shift = _reflect(as_params(params), n)
    val, nodes = _log_z_tilde(p, n, k, quad)
    return LogZEstimate(shift + val, "tilde_phi", nodes)


def log_z(params, n: int, k: int, method: str = "tilde_phi", quad: QuadConfig = DEFAULT_QUAD) -> LogZEstimate:
    """Dispatch to one estimator; negative fields use ``Z(a, b) = e^{a n} Z(-a, b)``."""
    method = _METHOD_ALIASES.get(method, method)
    if method == "phi":
        return log_z_phi(params, n, k)
    if method == "h_phi":
        return log_z_h_phi(params, n, k)
    if method == "tilde_phi":
        return log_z_tilde_phi(params, n, k, quad)
    raise ConfigurationError(f"unknown approximation method {method!r}")


def log_normal_pdf_diff(w_lo, w_hi):
    """Signed log of ``phi(w_hi) - phi(w_lo)`` as ``(log|d|, sign)``."""
    a = log_normal_pdf(w_hi)
    b = log_normal_pdf(w_lo)
    hi = np.maximum(a, b)
    lo = np.minimum(a, b)
    with np.errstate(divide="ignore"):
        mag = hi + np.log1p(-np.exp(lo - hi))
    return mag, np.sign(a - b)
