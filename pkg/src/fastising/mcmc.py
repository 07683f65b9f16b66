"""Reference samplers for the homogeneous model and path-sampling ``log Z``.

Two updaters share one compiled chain driver:

* Swendsen-Wang: equal neighbours are bonded with probability
  ``1 - exp(-beta)``, clusters are found by union-find and each cluster
  ``C`` is relabelled 1 with probability ``sigmoid(sum_{i in C} h_i)``.
* single-site Gibbs in raster order with
  ``P(x_i = 1) = sigmoid(h_i - beta deg_i + 2 beta n1_i)``.

``h`` is a per-vertex field, equal to ``alpha`` everywhere for the plain
model; the Bayesian sampler passes its likelihood-adjusted field instead.

Random numbers come from a counter-based splitmix64 hash: the stream for
one sweep is keyed by ``(seed, chain, sweep)`` and the ``j``-th draw is a
pure function of that key and ``j``.  Chains are therefore reproducible
regardless of how many run at once or in which order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .errors import ConfigurationError, InputError
from .graph import Graph, _as_state
from .partition import IsingParams, LogZEstimate, as_params

UPDATERS = ("swendsen_wang", "single_site")
_UPDATER_ALIASES = {"sw": "swendsen_wang", "swendsen_wang": "swendsen_wang", "gibbs": "single_site", "single_site": "single_site"}

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


# -- counter-based RNG ------------------------------------------------------


@numba.njit(inline="always")
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@numba.njit(inline="always")
def stream_key(seed, chain, sweep):
    k = _mix(np.uint64(seed) + _GOLDEN)
    k = _mix(k ^ (np.uint64(chain) * _M1 + _GOLDEN))
    return _mix(k ^ (np.uint64(sweep) * _M2 + _GOLDEN))


@numba.njit(inline="always")
def draw(key, j):
    """The ``j``-th 64-bit draw of the stream ``key``."""
    return _mix(key + (np.uint64(j) + np.uint64(1)) * _GOLDEN)


@numba.njit(inline="always")
def to_unit(u):
    return float(u >> _S11) * _INV53


def _threshold(p: float) -> np.uint64:
    """Integer cut so that ``draw < cut`` happens with probability ``p``."""
    if p <= 0.0:
        return np.uint64(0)
    if p >= 1.0:
        return np.uint64(0xFFFFFFFFFFFFFFFF)
    return np.uint64(int(p * 2.0**64))


def uniforms(seed: int, chain: int, sweep: int, size: int) -> np.ndarray:
    """Uniform(0,1) draws from one stream (used in tests and by callers)."""
    return _uniforms(np.uint64(seed), np.uint64(chain), np.uint64(sweep), size)


@numba.njit(cache=True)
def _uniforms(seed, chain, sweep, size):
    key = stream_key(seed, chain, sweep)
    out = np.empty(size)
    for j in range(size):
        out[j] = to_unit(draw(key, j))
    return out


# -- kernels ----------------------------------------------------------------


@numba.njit(inline="always")
def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@numba.njit(cache=True, nogil=True)
def _sw_clusters(x, eu, ev, bond_cut, key, parent, size):
    """Bond equal neighbours; leaves root labels in ``parent``.

    Returns ``(spin, nonmatches)`` of the incoming state, since every edge
    is visited here anyway.
    """
    n = x.shape[0]
    for i in range(n):
        parent[i] = i
        size[i] = 1
    spin = 0
    nonmatch = 0
    for e in range(eu.shape[0]):
        a = eu[e]
        b = ev[e]
        xa = x[a]
        if xa != x[b]:
            nonmatch += 1
            continue
        spin += xa
        if draw(key, e) >= bond_cut:
            continue
        ra = _find(parent, a)
        rb = _find(parent, b)
        if ra == rb:
            continue
        if size[ra] < size[rb]:
            ra, rb = rb, ra
        parent[rb] = ra
        size[ra] += size[rb]
    for i in range(n):
        parent[i] = _find(parent, i)
    return spin, nonmatch


@numba.njit(cache=True, nogil=True)
def _sw_sweep(x, h, eu, ev, bond_cut, key, parent, size, field):
    n = x.shape[0]
    m = eu.shape[0]
    spin, nonmatch = _sw_clusters(x, eu, ev, bond_cut, key, parent, size)
    for i in range(n):
        field[i] = 0.0
    for i in range(n):
        field[parent[i]] += h[i]
    for i in range(n):
        if parent[i] == i:
            f = field[i]
            # sigmoid(f), written to avoid overflow for large |f|
            if f >= 0:
                p1 = 1.0 / (1.0 + math.exp(-f))
            else:
                ef = math.exp(f)
                p1 = ef / (1.0 + ef)
            field[i] = 1.0 if to_unit(draw(key, m + i)) < p1 else 0.0
    for i in range(n):
        x[i] = 1 if field[parent[i]] > 0.5 else 0
    return spin, nonmatch


@numba.njit(cache=True, nogil=True)
def _gibbs_sweep(x, h, indptr, indices, beta, key):
    n = x.shape[0]
    for i in range(n):
        n1 = 0
        for p in range(indptr[i], indptr[i + 1]):
            n1 += x[indices[p]]
        deg = indptr[i + 1] - indptr[i]
        f = h[i] - beta * deg + 2.0 * beta * n1
        if f >= 0:
            p1 = 1.0 / (1.0 + math.exp(-f))
        else:
            ef = math.exp(f)
            p1 = ef / (1.0 + ef)
        x[i] = 1 if to_unit(draw(key, i)) < p1 else 0


@numba.njit(cache=True, nogil=True)
def _edge_stats(x, eu, ev):
    spin = 0
    nonmatch = 0
    for e in range(eu.shape[0]):
        a = x[eu[e]]
        b = x[ev[e]]
        spin += a & b
        nonmatch += a ^ b
    return spin, nonmatch


@numba.njit(cache=True, nogil=True)
def _run(x, h, beta, eu, ev, indptr, indices, bond_cut, seed, chain, sweep0, burn_in, samples, thin, use_sw, out):
    """Advance ``x`` in place; record (active, spin, nonmatches) per kept sample.

    For Swendsen-Wang the edge statistics of a kept state are picked up
    by the bond loop of the following sweep.
    """
    n = x.shape[0]
    parent = np.empty(n, dtype=np.int32)
    size = np.empty(n, dtype=np.int32)
    field = np.empty(n)
    sweep = sweep0
    total = burn_in + samples * thin
    kept = 0
    pending = False
    for t in range(total):
        key = stream_key(seed, chain, sweep)
        sweep += 1
        if use_sw:
            spin, nonmatch = _sw_sweep(x, h, eu, ev, bond_cut, key, parent, size, field)
            if pending:
                out[kept - 1, 1] = spin
                out[kept - 1, 2] = nonmatch
                pending = False
        else:
            _gibbs_sweep(x, h, indptr, indices, beta, key)
        if t >= burn_in and (t - burn_in) % thin == thin - 1:
            active = 0
            for i in range(n):
                active += x[i]
            out[kept, 0] = active
            if use_sw:
                pending = True
            else:
                spin, nonmatch = _edge_stats(x, eu, ev)
                out[kept, 1] = spin
                out[kept, 2] = nonmatch
            kept += 1
    if pending:
        spin, nonmatch = _edge_stats(x, eu, ev)
        out[kept - 1, 1] = spin
        out[kept - 1, 2] = nonmatch
    return sweep


# -- Python surface ---------------------------------------------------------


@dataclass(frozen=True)
class MCMCConfig:
    burn_in: int = 10000
    samples: int = 10000
    thin: int = 1
    seed: int = 0
    updater: str = "swendsen_wang"

    def __post_init__(self):
        if self.burn_in < 0:
            raise ConfigurationError("burn_in must be >= 0")
        if self.samples < 1:
            raise ConfigurationError("samples must be >= 1")
        if self.thin < 1:
            raise ConfigurationError("thin must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        upd = _UPDATER_ALIASES.get(self.updater)
        if upd is None:
            raise ConfigurationError(f"unknown updater {self.updater!r}")
        object.__setattr__(self, "updater", upd)


@dataclass(frozen=True)
class ChainResult:
    mean_active: float
    mean_spin: float
    mean_matches: float
    se_active: float
    se_spin: float
    se_matches: float
    n_samples: int
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


class CounterRNG:
    """Stream position for step-at-a-time use: ``(seed, chain)`` plus a sweep counter."""

    def __init__(self, seed: int = 0, chain: int = 0, sweep: int = 0):
        self.seed = int(seed)
        self.chain = int(chain)
        self.sweep = int(sweep)

    def next_key(self) -> np.uint64:
        key = _key(self.seed, self.chain, self.sweep)
        self.sweep += 1
        return key


@numba.njit(cache=True)
def _key_jit(seed, chain, sweep):
    return stream_key(seed, chain, sweep)


def _key(seed, chain, sweep) -> np.uint64:
    # numba hands uint64 results back as Python ints; keep the unsigned type
    return np.uint64(_key_jit(np.uint64(seed), np.uint64(chain), np.uint64(sweep)))


def _field(g: Graph, h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.ndim == 0:
        return np.full(g.n, float(h))
    if h.shape != (g.n,):
        raise InputError(f"field has shape {h.shape}, expected ({g.n},)")
    return np.ascontiguousarray(h)


def _edges(g: Graph):
    cached = getattr(g, "_mcmc_edges", None)
    if cached is None:
        cached = (g.edges[:, 0].astype(np.int32), g.edges[:, 1].astype(np.int32))
        g._mcmc_edges = cached
    return cached


def _bond_cut(beta: float) -> np.uint64:
    return _threshold(-math.expm1(-beta))


def sw_clusters(g: Graph, x, beta: float, rng: CounterRNG) -> np.ndarray:
    """Root label of every vertex after one round of bonding (for inspection)."""
    x = _as_state(x, g.n)
    eu, ev = _edges(g)
    parent = np.empty(g.n, dtype=np.int32)
    size = np.empty(g.n, dtype=np.int32)
    _sw_clusters(x, eu, ev, _bond_cut(beta), rng.next_key(), parent, size)
    return parent


def sw_step(g: Graph, x, params, rng: CounterRNG, field=None) -> np.ndarray:
    """One Swendsen-Wang update; returns a new state."""
    p = as_params(params)
    x = _as_state(x, g.n).copy()
    eu, ev = _edges(g)
    h = _field(g, p.alpha if field is None else field)
    buf_p = np.empty(g.n, dtype=np.int32)
    buf_s = np.empty(g.n, dtype=np.int32)
    _sw_sweep(x, h, eu, ev, _bond_cut(p.beta), rng.next_key(), buf_p, buf_s, np.empty(g.n))
    return x


def gibbs_step(g: Graph, x, params, rng: CounterRNG, field=None) -> np.ndarray:
    """One raster-order sweep of single-site heat-bath updates; returns a new state."""
    p = as_params(params)
    x = _as_state(x, g.n).copy()
    h = _field(g, p.alpha if field is None else field)
    _gibbs_sweep(x, h, g.indptr, g.indices, float(p.beta), rng.next_key())
    return x


def advance(g: Graph, x: np.ndarray, field, beta: float, updater: str, rng: CounterRNG, sweeps: int = 1) -> np.ndarray:
    """Run ``sweeps`` updates in place on an int8 state without recording."""
    eu, ev = _edges(g)
    out = np.empty((0, 3), dtype=np.int64)
    rng.sweep = int(
        _run(x, _field(g, field), float(beta), eu, ev, g.indptr, g.indices, _bond_cut(beta),
             np.uint64(rng.seed), np.uint64(rng.chain), np.uint64(rng.sweep),
             int(sweeps), 0, 1, _UPDATER_ALIASES[updater] == "swendsen_wang", out)
    )
    return x


def batch_means_se(values) -> float:
    """Standard error of the mean from ``ceil(sqrt(N))`` contiguous batches."""
    v = np.asarray(values, dtype=float)
    n = v.size
    nb = math.ceil(math.sqrt(n))
    bs = n // nb
    if nb < 2 or bs < 1:
        return float("nan")
    means = v[: nb * bs].reshape(nb, bs).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(nb))


def sample_chain(g: Graph, params, cfg: MCMCConfig, chain: int = 0, x0=None, field=None):
    """Run one chain and return ``(ChainResult, raw samples, final state)``."""
    p = as_params(params)
    x = np.zeros(g.n, dtype=np.int8) if x0 is None else _as_state(x0, g.n).copy()
    h = _field(g, p.alpha if field is None else field)
    eu, ev = _edges(g)
    out = np.empty((cfg.samples, 3), dtype=np.int64)
    _run(x, h, float(p.beta), eu, ev, g.indptr, g.indices, _bond_cut(p.beta),
         np.uint64(cfg.seed), np.uint64(chain), np.uint64(0),
         cfg.burn_in, cfg.samples, cfg.thin, cfg.updater == "swendsen_wang", out)
    active = out[:, 0].astype(float)
    spin = out[:, 1].astype(float)
    matches = g.m - out[:, 2].astype(float)
    res = ChainResult(
        mean_active=float(active.mean()),
        mean_spin=float(spin.mean()),
        mean_matches=float(matches.mean()),
        se_active=batch_means_se(active),
        se_spin=batch_means_se(spin),
        se_matches=batch_means_se(matches),
        n_samples=cfg.samples,
        seed=int(cfg.seed),
    )
    return res, out, x


def run_chain(g: Graph, params, cfg: MCMCConfig, chain: int = 0, x0=None) -> ChainResult:
    """Ising moments by MCMC; bit-identical for identical arguments."""
    return sample_chain(g, params, cfg, chain=chain, x0=x0)[0]


# -- path sampling ----------------------------------------------------------


@dataclass(frozen=True)
class PathSampleResult:
    log_z: float
    se: float
    knots: np.ndarray
    mean_matches: np.ndarray
    chains: list = field(default_factory=list)

    @property
    def estimate(self) -> LogZEstimate:
        return LogZEstimate(self.log_z, "path_sampling", int(self.knots.size))

    @property
    def final(self) -> ChainResult:
        """Chain run at the target ``beta`` (its moments come for free)."""
        return self.chains[-1]


def _logistic(a: float) -> float:
    return 1.0 / (1.0 + math.exp(-a)) if a >= 0 else math.exp(a) / (1.0 + math.exp(a))


def path_sample(g: Graph, alpha: float, beta: float, knots: int = 32, cfg: MCMCConfig = MCMCConfig(),
                warm_start: bool = True) -> PathSampleResult:
    """Thermodynamic integration of ``E[matches]`` over ``b`` in ``[0, beta]``.

    Uses uniform knots and the trapezoid rule.  The ``b = 0`` value is exact
    (independent sites); each other knot runs one chain on its own stream.
    With ``warm_start`` a chain starts from the final state of the previous
    knot.
    """
    if knots < 2:
        raise ConfigurationError("path sampling needs at least 2 knots")
    if not beta > 0:
        raise InputError("path sampling needs beta > 0")
    IsingParams(alpha, beta)
    b = np.linspace(0.0, beta, knots)
    q = _logistic(alpha)
    means = np.empty(knots)
    ses = np.zeros(knots)
    means[0] = g.m * (q * q + (1.0 - q) ** 2)
    chains = []
    x = None
    for j in range(1, knots):
        res, _, xf = sample_chain(g, (alpha, b[j]), cfg, chain=j, x0=x if warm_start else None)
        chains.append(res)
        means[j] = res.mean_matches
        ses[j] = res.se_matches
        x = xf
    w = np.full(knots, beta / (knots - 1))
    w[[0, -1]] *= 0.5
    integral = float(w @ means)
    log_z0 = g.n * float(np.logaddexp(0.0, alpha))
    se = float(math.sqrt(np.sum((w * ses) ** 2)))
    return PathSampleResult(integral + log_z0 - g.m * beta, se, b, means, chains)


def path_sample_log_z(g: Graph, alpha: float, beta: float, knots: int = 32, cfg: MCMCConfig = MCMCConfig(),
                      warm_start: bool = True) -> LogZEstimate:
    return path_sample(g, alpha, beta, knots, cfg, warm_start).estimate


def default_threads() -> int:
    env = os.environ.get("ISING_FAST_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"ISING_FAST_THREADS={env!r} is not an integer") from None
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def parallel_map(fn, items, threads: int | None = None) -> list:
    """Order-preserving map; the compiled kernels release the GIL."""
    threads = default_threads() if threads is None else max(1, int(threads))
    items = list(items)
    if threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))
