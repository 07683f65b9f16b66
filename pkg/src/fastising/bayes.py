"""Bayesian activation detection from replicated p-value maps.

Each voxel is either inactive, with uniform p-values, or active, with
p-values from ``Beta(mu psi, (1 - mu) psi)``.  Labels carry an Ising
prior with unknown ``(alpha, beta)``; ``psi`` has a Gamma prior and ``mu``
a uniform one.  The sampler is Metropolis-within-Gibbs, and the
intractable normalising constant in the ``alpha`` and ``beta`` steps is
replaced by the fast integral approximation.

Voxels outside the mask are frozen inactive.  Only per-voxel means of
``log p`` and ``log(1 - p)`` are kept, since the likelihood depends on
the data through nothing else.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import gammaln
from scipy.stats import rankdata

from . import mcmc
from .errors import ConfigurationError, DataError, InputError, NumericalDomainError
from .graph import Graph, GraphSpec, build
from .partition import QuadConfig, log_z

P_EPS = 1e-12
LABEL_WARMUP = 3000
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PValueData:
    n_voxels: int
    replicates: int
    log_p_bar: np.ndarray
    log_q_bar: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        for name in ("log_p_bar", "log_q_bar", "mask"):
            arr = getattr(self, name)
            if arr.shape != (self.n_voxels,):
                raise DataError(f"{name} has shape {arr.shape}, expected ({self.n_voxels},)")
        bad = self.mask & ~(np.isfinite(self.log_p_bar) & np.isfinite(self.log_q_bar))
        if bad.any():
            raise DataError(f"non-finite log p-value summary at voxel {int(np.flatnonzero(bad)[0])}")

    @classmethod
    def from_pvalues(cls, p, mask=None, eps: float = P_EPS) -> "PValueData":
        """Build from an ``(R, n)`` array of p-values (one row per replicate)."""
        p = np.asarray(p, dtype=float)
        if p.ndim != 2:
            raise DataError("p-values must be a 2-D (replicates, voxels) array")
        if not np.all(np.isfinite(p)):
            raise DataError("p-values must be finite")
        if np.any((p < 0) | (p > 1)):
            raise DataError("p-values must lie in [0, 1]")
        p = np.clip(p, eps, 1.0 - eps)
        r, n = p.shape
        mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(-1)
        return cls(n, r, np.log(p).mean(axis=0), np.log1p(-p).mean(axis=0), mask)


@dataclass(frozen=True)
class BayesParams:
    alpha: float
    beta: float
    psi: float
    mu: float
    x: np.ndarray

    def __post_init__(self):
        if not self.psi > 0:
            raise InputError("psi must be positive")
        if not 0.0 < self.mu < 1.0:
            raise InputError("mu must lie in (0, 1)")
        if self.beta < 0:
            raise InputError("beta must be non-negative")


@dataclass(frozen=True)
class PriorConfig:
    zeta: float = 10.0
    theta_psi: float = 1.0
    gamma_beta: float = 1.0
    sigma2_alpha: float = 1.0
    # optional bounded uniform prior on alpha; None means flat on the real line
    alpha_range: tuple | None = None

    def __post_init__(self):
        for name in ("zeta", "theta_psi", "gamma_beta", "sigma2_alpha"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.alpha_range is not None:
            lo, hi = self.alpha_range
            if not lo < hi:
                raise ConfigurationError("alpha_range must be an increasing pair")


class TildeZ:
    """``log Z`` provider backed by the integral approximation, with a small cache."""

    def __init__(self, n: int, k: int, quad: QuadConfig = QuadConfig()):
        self.n, self.k, self.quad = n, k, quad
        self._cache: dict = {}

    def __call__(self, alpha: float, beta: float) -> float:
        key = (alpha, beta)
        val = self._cache.get(key)
        if val is None:
            val = log_z((alpha, beta), self.n, self.k, "tilde_phi", self.quad).log_z
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = val
        return val


def log_c_b(psi: float, mu: float) -> float:
    """Log of the Beta normaliser ``Gamma(psi) / (Gamma(mu psi) Gamma((1-mu) psi))``."""
    return float(gammaln(psi) - gammaln(mu * psi) - gammaln((1.0 - mu) * psi))


def ent(mu: float) -> float:
    """``mu log mu + (1 - mu) log(1 - mu)`` (a negative entropy)."""
    return float(mu * math.log(mu) + (1.0 - mu) * math.log1p(-mu))


def activation_field(data: PValueData, state: BayesParams) -> np.ndarray:
    """Per-voxel log odds ``A_i`` of activity before neighbour terms; ``-inf`` off-mask."""
    r = data.replicates
    a = state.mu * state.psi
    b = (1.0 - state.mu) * state.psi
    h = state.alpha + (a - 1.0) * r * data.log_p_bar + (b - 1.0) * r * data.log_q_bar + r * log_c_b(state.psi, state.mu)
    bad = data.mask & ~np.isfinite(h)
    if bad.any():
        raise DataError(f"non-finite activation log-odds at voxel {int(np.flatnonzero(bad)[0])}")
    return np.where(data.mask, h, -np.inf)


def _log_ab(data: PValueData, x) -> tuple[float, float, int]:
    on = (np.asarray(x) == 1) & data.mask
    r = data.replicates
    return float(r * data.log_p_bar[on].sum()), float(r * data.log_q_bar[on].sum()), int(r * on.sum())


# -- the five updates -------------------------------------------------------


def update_x(data: PValueData, state: BayesParams, g: Graph, rng: mcmc.CounterRNG, mode: str = "single_site") -> BayesParams:
    """One sweep of label updates (raster Gibbs or Swendsen-Wang with field ``A_i``)."""
    x = np.array(state.x, dtype=np.int8)
    mcmc.advance(g, x, activation_field(data, state), state.beta, mode, rng, 1)
    return replace(state, x=x)


def beta_log_ratio(beta: float, beta_new: float, nonmatches: int, prior: PriorConfig, zprov, alpha: float,
                   exact: bool = False) -> float:
    """Log Hastings ratio for a Gamma(mean beta, variance gamma) proposal.

    The default is the Stirling-simplified expression.  ``exact=True``
    keeps the log-gamma terms and the full proposal density ratio.
    """
    g = prior.gamma_beta
    log_lik = zprov(alpha, beta) - zprov(alpha, beta_new) - (beta_new - beta) * nonmatches
    if beta_new == beta:
        return 0.0
    if exact:
        a_cur, a_new = beta * beta / g, beta_new * beta_new / g

        def log_q(y, shape, rate):
            return shape * math.log(rate) - float(gammaln(shape)) + (shape - 1.0) * math.log(y) - rate * y

        return log_lik + log_q(beta, a_new, beta_new / g) - log_q(beta_new, a_cur, beta / g)
    return (
        log_lik
        + math.log(beta_new / beta)
        + (beta * beta + beta_new * beta_new) / g * math.log(beta / beta_new)
        + (beta_new * beta_new - beta * beta) / g
    )


def update_beta(state: BayesParams, g: Graph, rng: np.random.Generator, prior: PriorConfig, zprov,
                exact: bool = False) -> BayesParams:
    beta = state.beta
    if not beta > 0:
        raise InputError("the beta update needs beta > 0")
    shape = beta * beta / prior.gamma_beta
    proposal = float(rng.gamma(shape, prior.gamma_beta / beta))
    if not proposal > 0:
        return state
    nonmatches = g.match_statistics(state.x)[2]
    lr = beta_log_ratio(beta, proposal, nonmatches, prior, zprov, state.alpha, exact)
    if math.log(rng.random()) < min(0.0, lr):
        return replace(state, beta=proposal)
    return state


def alpha_log_ratio(alpha: float, alpha_new: float, beta: float, active: int, zprov) -> float:
    """Log acceptance ratio of the random-walk ``alpha`` step under a flat prior."""
    if alpha_new == alpha:
        return 0.0
    return zprov(alpha, beta) - zprov(alpha_new, beta) + (alpha_new - alpha) * active


def update_alpha(state: BayesParams, rng: np.random.Generator, prior: PriorConfig, zprov, active: int | None = None) -> BayesParams:
    proposal = float(state.alpha + math.sqrt(prior.sigma2_alpha) * rng.standard_normal())
    u = rng.random()
    if prior.alpha_range is not None and not prior.alpha_range[0] <= proposal <= prior.alpha_range[1]:
        return state
    s = int(np.sum(state.x)) if active is None else active
    lr = alpha_log_ratio(state.alpha, proposal, state.beta, s, zprov)
    if math.log(u) < min(0.0, lr):
        return replace(state, alpha=proposal)
    return state


def psi_rate(state: BayesParams, data: PValueData, prior: PriorConfig, exact: bool = False) -> float:
    """Rate of the Gamma proposal for ``psi``; ``exact`` scales ``Ent(mu)`` by ``n1``."""
    log_a, log_b, n1 = _log_ab(data, state.x)
    e = ent(state.mu) * (n1 if exact else 1)
    return prior.theta_psi + e - state.mu * log_a - (1.0 - state.mu) * log_b


def psi_log_ratio(psi: float, psi_new: float, state: BayesParams, data: PValueData, prior: PriorConfig,
                  exact: bool = False) -> float:
    """Log acceptance for the Gamma proposal of the ``psi`` step.

    The default is the Stirling shortcut ``(psi - psi_new) n1 Ent(mu)``.
    With ``exact=True`` the proposal is the Stirling conditional (rate
    with ``n1 Ent(mu)``) and the ratio keeps every log-gamma term.
    """
    log_a, log_b, n1 = _log_ab(data, state.x)
    if n1 == 0:
        return 0.0
    mu = state.mu
    if not exact:
        return (psi - psi_new) * n1 * ent(mu)
    lik = mu * log_a + (1.0 - mu) * log_b
    shape = 0.5 * n1 + prior.zeta
    rate = psi_rate(state, data, prior, exact=True)

    def log_target(p):
        return n1 * log_c_b(p, mu) + (prior.zeta - 1.0) * math.log(p) + p * (lik - prior.theta_psi)

    def log_q(p):
        return (shape - 1.0) * math.log(p) - rate * p

    return log_target(psi_new) - log_target(psi) + log_q(psi) - log_q(psi_new)


def update_psi(state: BayesParams, data: PValueData, rng: np.random.Generator, prior: PriorConfig,
               exact: bool = False) -> BayesParams:
    """Gamma proposal from the Stirling conditional; upward moves are always accepted."""
    _, _, n1 = _log_ab(data, state.x)
    if n1 == 0:
        # the likelihood drops out: the conditional is the prior itself
        return replace(state, psi=float(rng.gamma(prior.zeta, 1.0 / prior.theta_psi)))
    rate = psi_rate(state, data, prior, exact)
    if not rate > 0:
        raise NumericalDomainError(f"psi proposal rate {rate!r} is not positive")
    proposal = float(rng.gamma(0.5 * n1 + prior.zeta, 1.0 / rate))
    if not proposal > 0:
        return state
    lr = psi_log_ratio(state.psi, proposal, state, data, prior, exact)
    if math.log(rng.random()) < min(0.0, lr):
        return replace(state, psi=proposal)
    return state


def mu_log_ratio(mu: float, mu_new: float, psi: float, log_a: float, log_b: float, n1: int, exact: bool = False) -> float:
    if exact:
        lg = n1 * float(gammaln(mu * psi) + gammaln((1.0 - mu) * psi) - gammaln(mu_new * psi) - gammaln((1.0 - mu_new) * psi))
        return lg + psi * (mu_new - mu) * (log_a - log_b)
    return (
        psi * (mu_new - mu) * (log_a - log_b)
        + psi * n1 * (ent(mu) - ent(mu_new))
        + 0.5 * n1 * math.log(mu_new * (1.0 - mu_new) / (mu * (1.0 - mu)))
    )


def update_mu(state: BayesParams, data: PValueData, rng: np.random.Generator, exact: bool = False) -> BayesParams:
    """Independence proposal from U(0, 1)."""
    proposal = float(rng.random())
    if not 0.0 < proposal < 1.0:
        return state
    log_a, log_b, n1 = _log_ab(data, state.x)
    lr = mu_log_ratio(state.mu, proposal, state.psi, log_a, log_b, n1, exact)
    if math.log(rng.random()) < min(0.0, lr):
        return replace(state, mu=proposal)
    return state


# -- driver -----------------------------------------------------------------


@dataclass
class PosteriorSummary:
    prob: np.ndarray
    traces: dict
    acceptance: dict
    psi_fallbacks: int
    seed: int
    final: BayesParams = field(repr=False)

    def interval(self, name: str, level: float = 0.95) -> tuple[float, float]:
        t = self.traces[name]
        lo = (1.0 - level) / 2.0
        return float(np.quantile(t, lo)), float(np.quantile(t, 1.0 - lo))

    def summary(self) -> dict:
        out = {"seed": self.seed, "acceptance": self.acceptance, "psi_fallbacks": self.psi_fallbacks}
        for name, t in self.traces.items():
            lo, hi = self.interval(name)
            out[name] = {"mean": float(np.mean(t)), "sd": float(np.std(t)), "q025": lo, "q975": hi}
        return out


def default_init(n: int) -> BayesParams:
    return BayesParams(alpha=0.001, beta=0.0025, psi=1.0, mu=0.001, x=np.zeros(n, dtype=np.int8))


def run_posterior(data: PValueData, g: Graph, prior: PriorConfig = PriorConfig(), cfg: mcmc.MCMCConfig = mcmc.MCMCConfig(),
                  init: BayesParams | None = None, *, label_warmup: int = LABEL_WARMUP, zprov=None,
                  fixed: tuple = (), chain: int = 0, exact_ratios: bool = False, on_sample=None) -> PosteriorSummary:
    """Metropolis-within-Gibbs over ``(x, beta, alpha, psi, mu)``.

    ``label_warmup`` sweeps update only the labels from ``init``; then
    ``cfg.burn_in`` joint iterations are discarded and ``cfg.samples``
    iterations (every ``cfg.thin``-th) are kept.  Names in ``fixed`` are
    held at their initial values.  ``on_sample`` is called with each kept
    state.
    """
    if g.n != data.n_voxels:
        raise DataError(f"graph has {g.n} vertices but the data has {data.n_voxels} voxels")
    unknown = set(fixed) - {"alpha", "beta", "psi", "mu"}
    if unknown:
        raise ConfigurationError(f"cannot fix unknown parameters {sorted(unknown)}")
    state = init or default_init(g.n)
    state = replace(state, x=np.where(data.mask, np.asarray(state.x, dtype=np.int8), 0).astype(np.int8))
    zprov = zprov or TildeZ(g.n, g.k_nominal)
    x_rng = mcmc.CounterRNG(cfg.seed, chain)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(cfg.seed), int(chain)])))
    mode = cfg.updater

    for _ in range(label_warmup):
        state = update_x(data, state, g, x_rng, mode)

    names = ("alpha", "beta", "psi", "mu")
    traces = {k: np.empty(cfg.samples) for k in names}
    traces["active"] = np.empty(cfg.samples)
    moves = {k: 0 for k in names}
    prob = np.zeros(g.n)
    fallbacks = 0
    total = cfg.burn_in + cfg.samples * cfg.thin
    kept = 0
    for t in range(total):
        state = update_x(data, state, g, x_rng, mode)
        if "beta" not in fixed:
            new = update_beta(state, g, rng, prior, zprov, exact_ratios)
            moves["beta"] += new.beta != state.beta
            state = new
        if "alpha" not in fixed:
            new = update_alpha(state, rng, prior, zprov)
            moves["alpha"] += new.alpha != state.alpha
            state = new
        if "psi" not in fixed:
            try:
                new = update_psi(state, data, rng, prior, exact_ratios)
            except NumericalDomainError:
                fallbacks += 1
                new = replace(state, psi=float(rng.gamma(prior.zeta, 1.0 / prior.theta_psi)))
            moves["psi"] += new.psi != state.psi
            state = new
        if "mu" not in fixed:
            new = update_mu(state, data, rng, exact_ratios)
            moves["mu"] += new.mu != state.mu
            state = new
        if t >= cfg.burn_in and (t - cfg.burn_in) % cfg.thin == cfg.thin - 1:
            for k in names:
                traces[k][kept] = getattr(state, k)
            traces["active"][kept] = state.x.sum()
            prob += state.x
            kept += 1
            if on_sample is not None:
                on_sample(state)
    acceptance = {k: (moves[k] / total if k not in fixed else None) for k in names}
    return PosteriorSummary(prob / kept, traces, acceptance, fallbacks, int(cfg.seed), state)


# -- synthetic data, scoring, I/O -------------------------------------------


@dataclass(frozen=True)
class SyntheticSet:
    data: PValueData
    truth: np.ndarray
    graph: Graph
    pvalues: np.ndarray


def synthetic(rows: int = 32, cols: int = 32, order: int = 2, alpha: float = -2.0, beta: float = 0.3,
              a: float = 0.6, b: float = 11.4, replicates: int = 12, seed: int = 0, sweeps: int = 500,
              topology: str = "lattice2d-torus") -> SyntheticSet:
    """Draw labels from the Ising model by Swendsen-Wang, then replicate p-values."""
    g = build(GraphSpec(topology, rows, cols, order))
    x = np.zeros(g.n, dtype=np.int8)
    mcmc.advance(g, x, alpha, beta, "swendsen_wang", mcmc.CounterRNG(seed, 2**32 - 1), sweeps)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 2**32 - 2])))
    p = rng.random((replicates, g.n))
    on = x == 1
    p[:, on] = rng.beta(a, b, size=(replicates, int(on.sum())))
    return SyntheticSet(PValueData.from_pvalues(p), x, g, p)


def auc(scores, labels) -> float:
    """Area under the ROC curve via the rank-sum statistic (ties averaged)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InputError("AUC needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def read_pvalue_csv(path, rows: int, cols: int) -> np.ndarray:
    """Read ``voxel,row,col,rep,p`` rows into an ``(R, rows*cols)`` array."""
    recs = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"row", "col", "rep", "p"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise DataError(f"{path}: expected header voxel,row,col,rep,p")
        for line, rec in enumerate(reader, start=2):
            try:
                recs.append((int(rec["row"]), int(rec["col"]), int(rec["rep"]), float(rec["p"])))
            except (TypeError, ValueError):
                raise DataError(f"{path}:{line}: malformed record") from None
    if not recs:
        raise DataError(f"{path}: no records")
    arr = np.array(recs, dtype=float)
    reps = np.unique(arr[:, 2]).astype(int)
    rr, cc = arr[:, 0].astype(int), arr[:, 1].astype(int)
    if rr.min() < 0 or rr.max() >= rows or cc.min() < 0 or cc.max() >= cols:
        raise DataError(f"{path}: voxel coordinates outside {rows}x{cols}")
    out = np.full((reps.size, rows * cols), np.nan)
    out[np.searchsorted(reps, arr[:, 2].astype(int)), rr * cols + cc] = arr[:, 3]
    return out


def read_mask_csv(path, rows: int, cols: int) -> np.ndarray:
    """Read ``row,col,mask`` rows; voxels not listed are outside the mask."""
    mask = np.zeros(rows * cols, dtype=bool)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"row", "col"} <= set(reader.fieldnames):
            raise DataError(f"{path}: expected header row,col[,mask]")
        for rec in reader:
            r, c = int(rec["row"]), int(rec["col"])
            if not (0 <= r < rows and 0 <= c < cols):
                raise DataError(f"{path}: voxel ({r},{c}) outside {rows}x{cols}")
            mask[r * cols + c] = int(rec.get("mask", 1) or 1) != 0
    return mask


def load_pvalues(path, rows: int, cols: int, mask_path=None) -> PValueData:
    p = read_pvalue_csv(path, rows, cols)
    mask = read_mask_csv(mask_path, rows, cols) if mask_path else np.ones(rows * cols, dtype=bool)
    missing = mask & np.isnan(p).any(axis=0)
    if missing.any():
        raise DataError(f"{path}: voxel {int(np.flatnonzero(missing)[0])} lacks some replicates")
    p = np.where(np.isnan(p), 0.5, p)
    return PValueData.from_pvalues(p, mask)


def write_pvalue_csv(path, pvalues: np.ndarray, cols: int):
    pvalues = np.asarray(pvalues)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["voxel", "row", "col", "rep", "p"])
        for rep in range(pvalues.shape[0]):
            for v in range(pvalues.shape[1]):
                w.writerow([v, v // cols, v % cols, rep, repr(float(pvalues[rep, v]))])


def write_map_csv(path, prob: np.ndarray, cols: int):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "prob"])
        for v, pr in enumerate(prob):
            w.writerow([v // cols, v % cols, repr(float(pr))])
