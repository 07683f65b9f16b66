"""Ground-truth oracles: the circular 1-NN closed form and exhaustive enumeration."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import InputError, NumericalDomainError
from .graph import Graph

BRUTE_MAX_N = 24


def log_z_1nn(alpha: float, beta: float, n: int) -> float:
    """Large-``n`` log partition function of the circular chain in {0,1} spins."""
    if n < 3:
        raise InputError("the chain needs n >= 3")
    if beta < 0:
        raise InputError("beta must be non-negative")
    # factor e^{beta/2} out of the bracket so that beta = 10 stays finite
    c = math.cosh(alpha / 2.0)
    radicand = c * c - 2.0 * math.exp(-beta) * math.sinh(beta)
    if radicand < 0:
        raise NumericalDomainError(f"negative radicand {radicand!r} at alpha={alpha}, beta={beta}")
    return n * (alpha - beta) / 2.0 + n * (beta / 2.0 + math.log(c + math.sqrt(radicand)))


@dataclass(frozen=True)
class BruteForceResult:
    log_z: float
    m_active: float
    s_spin: float
    matches: float


@numba.njit(cache=True, inline="always")
def _neumaier(total, comp, v):
    t = total + v
    if abs(total) >= abs(v):
        comp += (total - t) + v
    else:
        comp += (v - t) + total
    return t, comp


@numba.njit(cache=True)
def _enumerate(n, indptr, indices, alpha, beta, m):
    x = np.zeros(n, dtype=np.int8)
    # pass 1: maximum log-weight along the Gray-code walk
    active = 0
    nonmatch = 0
    spin = 0
    best = 0.0
    total = 1 << n
    for t in range(1, total):
        i = 0
        tt = t
        while (tt & 1) == 0:
            tt >>= 1
            i += 1
        na = 0
        for p in range(indptr[i], indptr[i + 1]):
            na += x[indices[p]]
        deg = indptr[i + 1] - indptr[i]
        if x[i] == 0:
            x[i] = 1
            active += 1
            spin += na
            nonmatch += (deg - na) - na
        else:
            x[i] = 0
            active -= 1
            spin -= na
            nonmatch += na - (deg - na)
        e = alpha * active - beta * nonmatch
        if e > best:
            best = e
    # pass 2: the walk ends on the top-bit state, so restart from all-zero
    for j in range(n):
        x[j] = 0
    active = 0
    nonmatch = 0
    spin = 0
    # compensated sums: 2^24 terms would otherwise cost ~1e-11 relative
    z, cz = math.exp(-best), 0.0
    sa, ca = 0.0, 0.0
    ss, cs = 0.0, 0.0
    sm, cm = z * m, 0.0
    for t in range(1, total):
        i = 0
        tt = t
        while (tt & 1) == 0:
            tt >>= 1
            i += 1
        na = 0
        for p in range(indptr[i], indptr[i + 1]):
            na += x[indices[p]]
        deg = indptr[i + 1] - indptr[i]
        if x[i] == 0:
            x[i] = 1
            active += 1
            spin += na
            nonmatch += (deg - na) - na
        else:
            x[i] = 0
            active -= 1
            spin -= na
            nonmatch += na - (deg - na)
        w = math.exp(alpha * active - beta * nonmatch - best)
        z, cz = _neumaier(z, cz, w)
        sa, ca = _neumaier(sa, ca, w * active)
        ss, cs = _neumaier(ss, cs, w * spin)
        sm, cm = _neumaier(sm, cm, w * (m - nonmatch))
    z += cz
    sa += ca
    ss += cs
    sm += cm
    return best + math.log(z), sa / z, ss / z, sm / z


def brute_force(g: Graph, alpha: float, beta: float) -> BruteForceResult:
    """Exact ``log Z``, ``E[sum x]``, ``E[spin]`` and ``E[matches]`` by enumeration.

    States are visited in reflected Gray-code order so each step flips one
    vertex and updates the sufficient statistics in ``O(degree)``.
    """
    if g.n > BRUTE_MAX_N:
        raise InputError(f"brute force refuses n={g.n} > {BRUTE_MAX_N} (2^n states)")
    if beta < 0:
        raise InputError("beta must be non-negative")
    lz, ma, ss, mt = _enumerate(g.n, g.indptr, g.indices, float(alpha), float(beta), g.m)
    return BruteForceResult(float(lz), float(ma), float(ss), float(mt))


def log_z_1nn_exact(alpha: float, beta: float, n: int) -> float:
    """Finite-``n`` transfer-matrix value for the circular chain (both eigenvalues)."""
    # T[a, b] = exp(alpha (a + b) / 2 - beta [a != b])
    t = np.array([[0.0, alpha / 2.0 - beta], [alpha / 2.0 - beta, alpha]])
    ev = np.linalg.eigvalsh(np.exp(t))
    lam = np.abs(ev)
    lmax = lam.max()
    return float(n * math.log(lmax) + math.log(np.sum(np.sign(ev) ** n * (lam / lmax) ** n)))
