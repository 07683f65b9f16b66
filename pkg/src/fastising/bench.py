"""Surfaces over an (alpha, beta) grid and the discrepancies between them."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import exact, mcmc, moments, partition
from .errors import ConfigurationError, DataError, InputError, IsingError
from .graph import Graph

log = logging.getLogger(__name__)

QUANTITIES = ("logZ", "M", "S")


@dataclass(frozen=True)
class GridSpec:
    alphas: tuple
    betas: tuple

    def __post_init__(self):
        a = tuple(float(v) for v in self.alphas)
        b = tuple(float(v) for v in self.betas)
        for name, vals in (("alphas", a), ("betas", b)):
            if not vals:
                raise ConfigurationError(f"{name} must not be empty")
            if any(not math.isfinite(v) for v in vals):
                raise ConfigurationError(f"{name} must be finite")
            if any(y <= x for x, y in zip(vals, vals[1:])):
                raise ConfigurationError(f"{name} must be strictly increasing")
        if b[0] < 0:
            raise ConfigurationError("betas must be non-negative")
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "betas", b)

    @classmethod
    def default(cls) -> "GridSpec":
        """19 uniform alphas on [0, 5] and 58 log-uniform betas on [0.005, 10]."""
        return cls(tuple(np.linspace(0.0, 5.0, 19)), tuple(np.geomspace(0.005, 10.0, 58)))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.alphas), len(self.betas)

    def cells(self):
        for i, a in enumerate(self.alphas):
            for j, b in enumerate(self.betas):
                yield i, j, a, b

    def subgrid(self, n_alpha: int, n_beta: int) -> "GridSpec":
        """Evenly spaced rows and columns of this grid, keeping both ends."""
        ia = np.unique(np.round(np.linspace(0, len(self.alphas) - 1, n_alpha)).astype(int))
        ib = np.unique(np.round(np.linspace(0, len(self.betas) - 1, n_beta)).astype(int))
        return GridSpec(tuple(np.asarray(self.alphas)[ia]), tuple(np.asarray(self.betas)[ib]))

    def to_dict(self) -> dict:
        return {"alphas": list(self.alphas), "betas": list(self.betas)}

    @classmethod
    def from_json(cls, path) -> "GridSpec":
        with open(path) as fh:
            d = json.load(fh)
        try:
            return cls(tuple(d["alphas"]), tuple(d["betas"]))
        except KeyError as exc:
            raise ConfigurationError(f"{path}: grid file lacks {exc.args[0]!r}") from None


@dataclass
class Surface:
    grid: GridSpec
    values: np.ndarray
    label: str = ""
    status: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise InputError(f"values have shape {self.values.shape}, grid is {self.grid.shape}")
        if self.status is None:
            self.status = np.where(np.isfinite(self.values), "ok", "failed")
        self.status = np.asarray(self.status, dtype=object)

    @property
    def ok(self) -> np.ndarray:
        return self.status == "ok"

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha", "beta", "value", "status"])
            for i, j, a, b in self.grid.cells():
                w.writerow([repr(a), repr(b), repr(float(self.values[i, j])), self.status[i, j]])

    @classmethod
    def from_csv(cls, path, label: str = "") -> "Surface":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"alpha", "beta", "value"} <= set(reader.fieldnames):
                raise DataError(f"{path}: expected header alpha,beta,value,status")
            for line, rec in enumerate(reader, start=2):
                try:
                    rows.append((float(rec["alpha"]), float(rec["beta"]), float(rec["value"]), rec.get("status") or "ok"))
                except (TypeError, ValueError):
                    raise DataError(f"{path}:{line}: malformed record") from None
        if not rows:
            raise DataError(f"{path}: empty surface")
        alphas = sorted({r[0] for r in rows})
        betas = sorted({r[1] for r in rows})
        grid = GridSpec(tuple(alphas), tuple(betas))
        vals = np.full(grid.shape, np.nan)
        status = np.full(grid.shape, "failed", dtype=object)
        ia = {a: i for i, a in enumerate(alphas)}
        ib = {b: j for j, b in enumerate(betas)}
        for a, b, v, st in rows:
            vals[ia[a], ib[b]] = v
            status[ia[a], ib[b]] = st
        return cls(grid, vals, label or str(path), status)

    def to_json(self) -> dict:
        return {"label": self.label, "grid": self.grid.to_dict(), "values": self.values.tolist(), "status": self.status.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "Surface":
        try:
            grid = GridSpec(tuple(d["grid"]["alphas"]), tuple(d["grid"]["betas"]))
            return cls(grid, np.array(d["values"], dtype=float), d.get("label", ""), d.get("status"))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed surface JSON: {exc}") from None

    @classmethod
    def load(cls, path) -> "Surface":
        """Read a surface from ``.json`` or CSV, chosen by file suffix."""
        if str(path).endswith(".json"):
            with open(path) as fh:
                return cls.from_json(json.load(fh))
        return cls.from_csv(path)

    def save(self, path):
        if str(path).endswith(".json"):
            with open(path, "w") as fh:
                json.dump(self.to_json(), fh)
        else:
            self.to_csv(path)


# -- evaluation -------------------------------------------------------------


def _cell_fn(quantity: str, method: str, n: int, k: int, quad: partition.QuadConfig):
    method = {"hphi": "h_phi", "tilde": "tilde_phi"}.get(method, method)
    if quantity == "logZ":
        if method == "one_nn_exact":
            return lambda a, b: exact.log_z_1nn(a, b, n)
        return lambda a, b: partition.log_z((a, b), n, k, method, quad).log_z
    if quantity == "M":
        if method == "phi":
            return lambda a, b: moments.m_phi((a, b), n, k)
        if method == "tilde_phi":
            return lambda a, b: moments.m_tilde_phi((a, b), n, k, quad)
    if quantity == "S":
        if method == "phi":
            return lambda a, b: moments.s_phi((a, b), n, k)
        if method == "tilde_phi":
            return lambda a, b: moments.s_tilde_phi((a, b), n, k, quad)
    raise ConfigurationError(f"no {quantity} evaluator for method {method!r}")


def evaluate_surface(quantity: str, method: str, n: int, k: int, grid: GridSpec,
                     quad: partition.QuadConfig = partition.DEFAULT_QUAD, threads: int | None = None) -> Surface:
    """One deterministic value per cell; a failing cell is marked, not fatal."""
    if quantity not in QUANTITIES:
        raise ConfigurationError(f"unknown quantity {quantity!r}")
    fn = _cell_fn(quantity, method, n, k, quad)

    def cell(item):
        i, j, a, b = item
        try:
            return float(fn(a, b)), "ok"
        except IsingError as exc:
            log.warning("cell (%g, %g) failed: %s", a, b, exc)
            return math.nan, f"failed:{exc.kind}"

    out = mcmc.parallel_map(cell, list(grid.cells()), threads)
    vals = np.array([v for v, _ in out]).reshape(grid.shape)
    status = np.array([s for _, s in out], dtype=object).reshape(grid.shape)
    return Surface(grid, vals, f"{quantity}:{method}:n={n}:k={k}", status)


@dataclass(frozen=True)
class MCMCSurfaces:
    log_z: Surface
    m_active: Surface
    s_spin: Surface


def mcmc_surfaces(g: Graph, grid: GridSpec, cfg: mcmc.MCMCConfig, knots: int = 32, warm_start: bool = True,
                  threads: int | None = None) -> MCMCSurfaces:
    """Path-sampling ``log Z`` plus the moments of the chain at the target ``beta``."""

    def cell(item):
        i, j, a, b = item
        # separate stream per cell, derived from the configured seed
        c = mcmc.MCMCConfig(cfg.burn_in, cfg.samples, cfg.thin, (cfg.seed + 1_000_003 * (i * len(grid.betas) + j)) % 2**64, cfg.updater)
        res = mcmc.path_sample(g, a, b, knots, c, warm_start)
        return res.log_z, res.final.mean_active, res.final.mean_spin

    out = np.array(mcmc.parallel_map(cell, list(grid.cells()), threads)).reshape(*grid.shape, 3)
    tag = f"n={g.n}:m={g.m}"
    return MCMCSurfaces(
        Surface(grid, out[..., 0], f"logZ:path_sampling:{tag}"),
        Surface(grid, out[..., 1], f"M:mcmc:{tag}"),
        Surface(grid, out[..., 2], f"S:mcmc:{tag}"),
    )


# -- discrepancy ------------------------------------------------------------


def trapezoid_weights(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size == 1:
        return np.ones(1)
    d = np.diff(x)
    w = np.zeros(x.size)
    w[:-1] += d / 2.0
    w[1:] += d / 2.0
    return w


def grid_weights(grid: GridSpec) -> np.ndarray:
    """Outer product of 1-D trapezoid weights; sums to the grid area."""
    return np.outer(trapezoid_weights(grid.alphas), trapezoid_weights(grid.betas))


@dataclass(frozen=True)
class Discrepancy:
    L1: float
    R1: float
    L1_over_V: float

    def to_dict(self) -> dict:
        return {"L1": self.L1, "R1": self.R1, "L1_over_V": self.L1_over_V}


def discrepancy(ref: Surface, test: Surface) -> Discrepancy:
    """Area-averaged absolute and relative gaps of ``test`` from the reference ``ref``."""
    if ref.grid.shape != test.grid.shape or not (
        np.allclose(ref.grid.alphas, test.grid.alphas) and np.allclose(ref.grid.betas, test.grid.betas)
    ):
        raise InputError("surfaces live on different grids")
    w = grid_weights(ref.grid)
    ok = ref.ok & test.ok & np.isfinite(ref.values) & np.isfinite(test.values)
    if not ok.any():
        raise InputError("no cell is valid in both surfaces")
    if not ok.all():
        log.warning("%d cells excluded as failed", int((~ok).sum()))
    a = ref.values
    diff = np.abs(a - test.values)
    v = w[ok].sum()
    l1 = float((w * diff)[ok].sum() / v)
    v_mc = float((w * a)[ok].sum() / v)
    rel_ok = ok & (np.abs(a) >= 1e-12)
    if (ok & ~rel_ok).any():
        log.warning("%d cells with |reference| < 1e-12 excluded from R1", int((ok & ~rel_ok).sum()))
    r1 = float((w * diff / np.where(rel_ok, np.abs(a), 1.0))[rel_ok].sum() / w[rel_ok].sum()) if rel_ok.any() else math.nan
    return Discrepancy(l1, r1, l1 / v_mc if v_mc != 0 else math.nan)
