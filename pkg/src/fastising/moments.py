"""Approximate first moments: mean activation ``M`` and mean spin ``S``.

Both come from the same per-``ell`` decomposition as the partition
function.  For ``S`` each group contributes ``E[s e^{beta r}]`` over the
tilted normal window, which is half the window mass times the truncated
mean of ``r``.  Regular-graph formulas use the nominal ``m = n k / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .edgestats import log_binom
from .errors import ConfigurationError, NumericalDomainError
from .partition import (
    DEFAULT_QUAD,
    IsingParams,
    QuadConfig,
    _check_nk,
    _log_z_phi,
    _log_z_tilde,
    as_params,
    endpoint_terms,
    integral_terms,
    log_normal_pdf_diff,
    sum_terms,
)


@dataclass(frozen=True)
class MomentEstimate:
    m_active: float
    s_spin: float
    method: str
    n: int
    k: int

    @property
    def m_nominal(self) -> float:
        return self.n * self.k / 2.0

    @property
    def matches(self) -> float:
        return self.m_nominal - (self.k * self.m_active - 2.0 * self.s_spin)


def _truncated_mean(w: dict) -> np.ndarray:
    """Mean of ``r`` under the tilted normal restricted to its window."""
    log_dphi, sign = log_normal_pdf_diff(w["w_lo"], w["w_hi"])
    with np.errstate(invalid="ignore", over="ignore"):
        ratio = sign * np.exp(log_dphi - w["log_dPhi"])
    return 2.0 * w["ell2"] * w["nu"] - w["sd"] * ratio


def _log_spin_terms(w: dict, log_weight) -> tuple[np.ndarray, np.ndarray]:
    """Signed log of ``weight * Delta_Phi * truncated_mean / 2`` per node."""
    tm = _truncated_mean(w)
    keep = np.isfinite(w["log_dPhi"]) & np.isfinite(tm)
    with np.errstate(divide="ignore"):
        mag = np.where(keep, log_weight + w["g"] + w["log_dPhi"] + np.log(np.abs(tm)) - math.log(2.0), -np.inf)
    return mag, np.where(keep, np.sign(tm), 0.0)


def _signed_lse(a, b) -> tuple[float, float]:
    val, sign = logsumexp(np.asarray(a, dtype=float), b=np.asarray(b, dtype=float), return_sign=True)
    return float(val), float(sign)


# -- alpha >= 0 cores -------------------------------------------------------


def _m_phi(p: IsingParams, n: int, k: int) -> float:
    t = sum_terms(p, n, k)
    parts = [math.log(n) + p.alpha * n, math.log(n) + p.alpha_prime(k), logsumexp(np.log(t["ell"]) + t["log_term"])]
    return math.exp(float(logsumexp(parts)) - _log_z_phi(p, n, k))


def _s_phi(p: IsingParams, n: int, k: int) -> float:
    m = n * k / 2.0
    t = sum_terms(p, n, k)
    mag, sgn = _log_spin_terms(t, log_binom(n, t["ell"]))
    log_num, sign = _signed_lse(np.append(mag, math.log(m) + p.alpha * n), np.append(sgn, 1.0))
    if sign <= 0:
        raise NumericalDomainError(f"S_phi numerator is not positive at alpha={p.alpha}, beta={p.beta}")
    return math.exp(log_num - _log_z_phi(p, n, k))


def _m_tilde(p: IsingParams, n: int, k: int, quad: QuadConfig) -> float:
    it = integral_terms(p, n, k, quad)
    log_j_minus = logsumexp(it["log_base"] + np.log(it["y"]))
    e = endpoint_terms(p, n, k)
    n2 = n * (n - 1) / 2.0
    log_c = math.log(n2) + float(logsumexp(e["g"] + e["log_dPhi"]))
    inner = logsumexp([p.alpha * n, p.alpha_prime(k), log_j_minus, log_c - math.log(n)])
    log_z, _ = _log_z_tilde(p, n, k, quad)
    return math.exp(math.log(n) + float(inner) - log_z)


def _s_tilde(p: IsingParams, n: int, k: int, quad: QuadConfig) -> float:
    m = n * k / 2.0
    it = integral_terms(p, n, k, quad)
    # log_base carries Delta_Phi already; the spin kernel adds it back itself
    log_weight = it["log_base"] - it["g"] - it["log_dPhi"]
    mag_i, sgn_i = _log_spin_terms(it, np.where(np.isfinite(it["log_dPhi"]), log_weight, -np.inf))
    e = endpoint_terms(p, n, k)
    # Euler-Maclaurin end corrections: half of each end summand
    mag_e, sgn_e = _log_spin_terms(e, log_binom(n, e["ell"]) + math.log(0.5))
    mags = np.concatenate([[math.log(m) + p.alpha * n], mag_e, mag_i])
    sgns = np.concatenate([[1.0], sgn_e, sgn_i])
    log_num, sign = _signed_lse(mags, sgns)
    if sign <= 0:
        raise NumericalDomainError(f"S_tilde numerator is not positive at alpha={p.alpha}, beta={p.beta}")
    log_z, _ = _log_z_tilde(p, n, k, quad)
    return math.exp(log_num - log_z)


# -- public API -------------------------------------------------------------


def _clip(value: float, upper: float, what: str) -> float:
    """Clamp rounding spill past the physical range; larger excursions are errors."""
    slack = 1e-9 * max(1.0, upper)
    if not (-slack <= value <= upper + slack):
        raise NumericalDomainError(f"{what}={value!r} outside [0, {upper}]")
    return min(max(value, 0.0), upper)


def _reflect_m(fn, params, n, k, *args) -> float:
    p = as_params(params)
    _check_nk(n, k)
    if p.alpha < 0:
        return _clip(n - fn(p.reflected(), n, k, *args), n, "M")
    return _clip(fn(p, n, k, *args), n, "M")


def _reflect_s(fn_s, fn_m, params, n, k, *args) -> float:
    p = as_params(params)
    _check_nk(n, k)
    m = n * k / 2.0
    if p.alpha < 0:
        # complement map x -> 1 - x: sum x_i x_j = m - sum deg_i y_i + sum y_i y_j
        q = p.reflected()
        return _clip(m - k * fn_m(q, n, k, *args) + fn_s(q, n, k, *args), m, "S")
    return _clip(fn_s(p, n, k, *args), m, "S")


def m_phi(params, n: int, k: int) -> float:
    """Expected number of active vertices from the ``O(n)`` sum."""
    return _reflect_m(_m_phi, params, n, k)


def m_tilde_phi(params, n: int, k: int, quad: QuadConfig = DEFAULT_QUAD) -> float:
    """Expected number of active vertices from the integral form."""
    return _reflect_m(_m_tilde, params, n, k, quad)


def s_phi(params, n: int, k: int) -> float:
    """Mean spin interaction ``E[sum_{i~j} x_i x_j]`` from the ``O(n)`` sum."""
    return _reflect_s(_s_phi, _m_phi, params, n, k)


def s_tilde_phi(params, n: int, k: int, quad: QuadConfig = DEFAULT_QUAD) -> float:
    """Mean spin interaction from the integral form."""
    return _reflect_s(_s_tilde, _m_tilde, params, n, k, quad)


def moments(params, n: int, k: int, method: str = "tilde_phi", quad: QuadConfig = DEFAULT_QUAD) -> MomentEstimate:
    if method in ("tilde", "tilde_phi"):
        return MomentEstimate(m_tilde_phi(params, n, k, quad), s_tilde_phi(params, n, k, quad), "tilde_phi", n, k)
    if method == "phi":
        return MomentEstimate(m_phi(params, n, k), s_phi(params, n, k), "phi", n, k)
    raise ConfigurationError(f"no moment approximation for method {method!r}")


def expected_matches(params, n: int, k: int, method: str = "tilde_phi", quad: QuadConfig = DEFAULT_QUAD) -> float:
    """``m - (k M - 2 S)``: expected number of edges whose endpoints agree."""
    return moments(params, n, k, method, quad).matches
