"""Edge-count statistics of vertex-induced subgraphs of a k-regular graph.

For an ``ell``-subset of the ``n`` vertices, ``r`` is the sum of the
within-subset degrees (twice the number of induced edges ``s``).  Its
marginal per-vertex law is hypergeometric; its mean and variance have
closed forms that drive the normal-window partition function estimates.

Moment generating functions here are always taken on ``r`` at argument
``beta``, i.e. ``E exp(beta * r) = E exp(2 * beta * s)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, log_ndtr

from .errors import InputError, NumericalDomainError

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def log_binom(n, k):
    """``log C(n, k)`` via log-gamma; accepts real arguments."""
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def _lse(v) -> float:
    # scipy's logsumexp carries ~0.4 ms of dispatch overhead; these are tiny vectors
    v = np.asarray(v, dtype=float)
    top = v.max()
    if not np.isfinite(top):
        return float(top)
    return float(top + math.log(np.exp(v - top).sum()))


@dataclass(frozen=True)
class SubgraphEdgeStats:
    n: int
    k: int
    ell: float
    beta: float
    ell2: float
    theta: float
    y_n1: float
    y_n2: float
    mu_ell: float
    sigma2_ell: float
    rho_ell: float
    nu_ell: float
    s_lo: float
    s_hi: float
    mu_ell1: float
    sigma2_ell1: float

    @property
    def tilted_sd(self) -> float:
        """Standard deviation of ``r`` once the covariance shrinkage is applied."""
        return math.sqrt(self.sigma2_ell * (1.0 - self.rho_ell))


def _check_nk(n, k):
    if n < 3:
        raise InputError(f"n={n} must be at least 3")
    if not 1 <= k <= n - 1:
        raise InputError(f"degree k={k} must lie in [1, n-1] for n={n}")


def stats_arrays(n: int, k: int, ell, beta: float) -> dict:
    """Vectorised per-``ell`` quantities; ``ell`` may be real-valued."""
    ell = np.asarray(ell, dtype=float)
    theta = k / (n - 1.0)
    ell2 = 0.5 * ell * (ell - 1.0)
    y_n1 = (ell - 1.0) / (n - 1.0)
    y_n2 = (ell - 2.0) / (n - 2.0)
    sigma2 = 2.0 * ell2 * theta * (1.0 - theta) * (1.0 - y_n2)
    rho = (ell - 1.0) * (n - 2.0 * k) / ((n - 2.0) * (n - k - 1.0))
    shrink = (1.0 - theta) * (1.0 - y_n2) * (1.0 - rho)
    return {
        "ell": ell,
        "theta": theta,
        "ell2": ell2,
        "y_n1": y_n1,
        "y_n2": y_n2,
        "mu": 2.0 * ell2 * theta,
        "sigma2": sigma2,
        "rho": rho,
        "nu": theta * (1.0 + beta * shrink),
        "shrink": shrink,
        "s_lo": np.maximum(0.0, k - n + ell) * ell / 2.0,
        "s_hi": np.minimum(ell - 1.0, k) * ell / 2.0,
        "mu1": (ell - 1.0) * theta,
        "sigma2_1": (ell - 1.0) * (1.0 - y_n1) * theta * (1.0 - theta),
    }


def subgraph_stats(n: int, k: int, ell: int, beta: float) -> SubgraphEdgeStats:
    _check_nk(n, k)
    if not 2 <= ell <= n - 1:
        raise InputError(f"ell={ell} outside [2, n-1]")
    if beta < 0:
        raise InputError("beta must be non-negative")
    a = stats_arrays(n, k, ell, beta)
    return SubgraphEdgeStats(
        n=n,
        k=k,
        ell=ell,
        beta=beta,
        ell2=float(a["ell2"]),
        theta=a["theta"],
        y_n1=float(a["y_n1"]),
        y_n2=float(a["y_n2"]),
        mu_ell=float(a["mu"]),
        sigma2_ell=float(a["sigma2"]),
        rho_ell=float(a["rho"]),
        nu_ell=float(a["nu"]),
        s_lo=float(a["s_lo"]),
        s_hi=float(a["s_hi"]),
        mu_ell1=float(a["mu1"]),
        sigma2_ell1=float(a["sigma2_1"]),
    )


# -- hypergeometric laws ----------------------------------------------------


def _pdm_support(ell, n, k):
    return max(0, k - n + ell), min(ell - 1, k)


@lru_cache(maxsize=4096)
def _log_pdm_table(ell: int, n: int, k: int) -> tuple[int, np.ndarray]:
    # ratio recursion p(r+1)/p(r), normalised over the support; log-gamma
    # differences lose ~1e-11 once log C(n, ell) reaches 1e4
    lo, hi = _pdm_support(ell, n, k)
    r = np.arange(lo, hi, dtype=float)
    steps = np.log((k - r) * (ell - 1 - r)) - np.log((r + 1) * (n - k - ell + r + 1))
    cum = np.concatenate([[0.0], np.cumsum(steps)])
    table = cum - _lse(cum)
    table.setflags(write=False)
    return lo, table


def log_pdm_pmf(r, ell: int, n: int, k: int):
    r = np.asarray(r)
    lo, table = _log_pdm_table(int(ell), int(n), int(k))
    idx = r - lo
    inside = (idx >= 0) & (idx < table.size)
    return np.where(inside, table[np.where(inside, idx, 0)], -np.inf)


def pdm_pmf(r, ell: int, n: int, k: int):
    """Law of the within-subset degree of one vertex of an ``ell``-subset."""
    out = np.exp(log_pdm_pmf(r, ell, n, k))
    return float(out) if np.ndim(out) == 0 else out


def pe_pmf(s, ell: int, n: int, m: int):
    """Hypergeometric edge count of a random ``ell``-set among random ``m``-edge graphs."""
    s = np.asarray(s)
    n2 = n * (n - 1) // 2
    l2 = ell * (ell - 1) // 2
    lo, hi = max(0, m - n2 + l2), min(l2, m)
    inside = (s >= lo) & (s <= hi)
    ss = np.where(inside, s, lo)
    val = log_binom(m, ss) + log_binom(n2 - m, l2 - ss) - log_binom(n2, l2)
    out = np.where(inside, np.exp(val), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def mgf_pdm(beta: float, ell: int, n: int, k: int) -> float:
    """``log E exp(beta * r)`` for the single-vertex degree law."""
    if beta == 0:
        return 0.0
    lo, hi = _pdm_support(ell, n, k)
    r = np.arange(lo, hi + 1)
    return _lse(beta * r + log_pdm_pmf(r, ell, n, k))


def _log_cosh(x: float) -> float:
    x = abs(x)
    return x + math.log1p(math.exp(-2.0 * x)) - math.log(2.0)


def mgf_even(beta: float, ell: int, n: int, k: int) -> float:
    """Log even-parity MGF of the summed degrees for small ``ell``.

    The ``ell`` vertex degrees are treated as independent, and the odd
    part of the convolution is folded back onto the even support with a
    two-point smoothing argument.  Valid for ``2 <= ell < sqrt(n)``.
    """
    assert 2 <= ell and ell * ell < n, "ell outside the small-ell regime"
    log_p_top = ell * float(log_pdm_pmf(k, ell, n, k))
    log_p_zero = ell * float(log_pdm_pmf(0, ell, n, k))
    terms = [
        ell * mgf_pdm(beta, ell, n, k),
        beta * (ell * k + 1) + log_p_top - math.log(2.0),
        -beta + log_p_zero - math.log(2.0),
    ]
    log_prefactor = math.log(2.0) - np.logaddexp(0.0, _log_cosh(beta))
    return float(log_prefactor + _lse(terms))


# -- tilted normal window ---------------------------------------------------


def log_normal_mass(w_lo, w_hi):
    """``log(Phi(w_hi) - Phi(w_lo))`` without cancellation in either tail."""
    w_lo = np.asarray(w_lo, dtype=float)
    w_hi = np.asarray(w_hi, dtype=float)
    upper = w_lo > 0
    # in the upper tail use the survival function: Phi(-w_lo) - Phi(-w_hi)
    a = np.where(upper, -w_hi, w_lo)
    b = np.where(upper, -w_lo, w_hi)
    la, lb = log_ndtr(a), log_ndtr(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        diff = la - lb
        out = lb + np.log1p(-np.exp(np.minimum(diff, 0.0)))
    return np.where(b > a, out, -np.inf)


def log_normal_pdf(w):
    w = np.asarray(w, dtype=float)
    return -0.5 * w * w - _LOG_SQRT_2PI


def window_arrays(n: int, k: int, ell, alpha: float, beta: float) -> dict:
    """Vectorised ``g(ell)``, standardised window limits and ``log Delta_Phi``.

    The window on ``r`` is ``[2 s_lo - 1, 2 s_hi + 1]``; after tilting by
    ``exp(beta r)`` the normal has mean ``2 ell2 nu`` and sd
    ``sigma sqrt(1 - rho)``.
    """
    st = stats_arrays(n, k, ell, beta)
    var = st["sigma2"] * (1.0 - st["rho"])
    if np.any(var <= 0):
        raise NumericalDomainError("sigma^2 (1 - rho) must be positive on the window")
    sd = np.sqrt(var)
    ell2 = st["ell2"]
    w_hi = 2.0 * ell2 * ((st["s_hi"] + 0.5) / ell2 - st["nu"]) / sd
    w_lo = 2.0 * ell2 * ((st["s_lo"] - 0.5) / ell2 - st["nu"]) / sd
    alpha_p = alpha - k * beta
    g = alpha_p * st["ell"] + 2.0 * beta * st["theta"] * ell2 * (1.0 + 0.5 * beta * st["shrink"])
    st.update(sd=sd, w_lo=w_lo, w_hi=w_hi, g=g, log_dPhi=log_normal_mass(w_lo, w_hi))
    return st


@dataclass(frozen=True)
class WindowTerms:
    g_ell: float
    delta_Phi: float
    delta_phi: float
    log_delta_Phi: float
    w_lo: float
    w_hi: float


def window_terms(stats: SubgraphEdgeStats, alpha: float, beta: float) -> WindowTerms:
    a = window_arrays(stats.n, stats.k, stats.ell, alpha, beta)
    w_lo, w_hi = float(a["w_lo"]), float(a["w_hi"])
    ldp = float(a["log_dPhi"])
    dphi = math.exp(float(log_normal_pdf(w_hi))) - math.exp(float(log_normal_pdf(w_lo)))
    return WindowTerms(
        g_ell=float(a["g"]),
        delta_Phi=math.exp(ldp),
        delta_phi=dphi,
        log_delta_Phi=ldp,
        w_lo=w_lo,
        w_hi=w_hi,
    )
