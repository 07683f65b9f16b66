"""Command-line interface.

Scalars and summaries are printed as JSON on stdout; surfaces and maps
are written as CSV.  Every JSON result carries a ``provenance`` block.
Failures print ``{"error": ..., "message": ...}`` on stderr and exit
with a nonzero status.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, bayes, bench, exact, mcmc, moments, partition
from .errors import ConfigurationError, IsingError
from .graph import GraphSpec, build

EXIT_ERROR = 1
EXIT_USAGE = 2


class _JsonArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        _fail("usage", message, EXIT_USAGE)


def _fail(kind: str, message: str, code: int = EXIT_ERROR):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    sys.exit(code)


def _provenance(args, seed=None) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    digest = hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]
    return {"version": __version__, "command": args.command, "seed": seed, "config_hash": digest}


def _emit(obj: dict, args, seed=None):
    obj = dict(obj)
    obj["provenance"] = _provenance(args, seed)
    print(json.dumps(obj, default=_jsonable))


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON serialisable: {type(v).__name__}")


def _graph_spec(args) -> GraphSpec:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            d = json.load(fh)
        return GraphSpec.from_dict(d.get("graph", d))
    cols = args.cols if args.cols is not None else (1 if args.topology == "circular-chain" else args.rows)
    return GraphSpec(args.topology, args.rows, cols, args.order)


def _threads(args) -> int:
    env = os.environ.get("ISING_FAST_THREADS")
    if env:
        return mcmc.default_threads()
    return args.threads if args.threads else mcmc.default_threads()


def _mcmc_cfg(args) -> mcmc.MCMCConfig:
    return mcmc.MCMCConfig(args.burnin, args.samples, args.thin, args.seed, args.updater)


# -- subcommands ------------------------------------------------------------


def cmd_approx(args):
    spec = _graph_spec(args)
    quad = partition.QuadConfig(args.quad_points, args.quad_rule)
    n, k = spec.n, spec.k
    params = (args.alpha, args.beta)
    method = {"hphi": "h_phi", "tilde": "tilde_phi"}.get(args.method, args.method)
    t0 = time.perf_counter()
    if args.quantity == "logZ":
        value = partition.log_z(params, n, k, method, quad).log_z
    elif method == "h_phi":
        raise ConfigurationError("h_phi only approximates logZ")
    elif args.quantity == "M":
        value = moments.m_phi(params, n, k) if method == "phi" else moments.m_tilde_phi(params, n, k, quad)
    else:
        value = moments.s_phi(params, n, k) if method == "phi" else moments.s_tilde_phi(params, n, k, quad)
    ms = (time.perf_counter() - t0) * 1e3
    _emit({"quantity": args.quantity, "value": value, "method": method, "n": n, "k": k, "runtime_ms": ms}, args)


def cmd_exact1nn(args):
    _emit({"value": exact.log_z_1nn(args.alpha, args.beta, args.n), "method": "one_nn"}, args)


def cmd_brute(args):
    g = build(_graph_spec(args))
    r = exact.brute_force(g, args.alpha, args.beta)
    _emit({"logZ": r.log_z, "M": r.m_active, "S": r.s_spin, "matches": r.matches, "n": g.n, "m": g.m}, args)


def cmd_sample(args):
    g = build(_graph_spec(args))
    r = mcmc.run_chain(g, (args.alpha, args.beta), _mcmc_cfg(args))
    _emit(r.to_dict() | {"n": g.n, "m": g.m}, args, args.seed)


def cmd_pathsample(args):
    g = build(_graph_spec(args))
    r = mcmc.path_sample(g, args.alpha, args.beta, args.knots, _mcmc_cfg(args), not args.no_warm_start)
    _emit({"log_z": r.log_z, "se": r.se, "method": "path_sampling", "knots": args.knots, "n": g.n, "m": g.m}, args, args.seed)


def cmd_grid(args):
    spec = _graph_spec(args)
    grid = bench.GridSpec.from_json(args.grid_file) if args.grid_file else bench.GridSpec.default()
    if args.subgrid:
        grid = grid.subgrid(*args.subgrid)
    threads = _threads(args)
    t0 = time.perf_counter()
    if args.method == "mcmc":
        g = build(spec)
        surfs = bench.mcmc_surfaces(g, grid, _mcmc_cfg(args), args.knots, not args.no_warm_start, threads)
        surf = {"logZ": surfs.log_z, "M": surfs.m_active, "S": surfs.s_spin}[args.quantity]
    else:
        method = "one_nn_exact" if args.method == "exact1nn" else args.method
        quad = partition.QuadConfig(args.quad_points, args.quad_rule)
        surf = bench.evaluate_surface(args.quantity, method, spec.n, spec.k, grid, quad, threads)
    surf.save(args.out)
    failed = int((~surf.ok).sum())
    _emit({"out": args.out, "cells": int(surf.values.size), "failed": failed, "label": surf.label,
           "runtime_s": time.perf_counter() - t0}, args, args.seed if args.method == "mcmc" else None)


def cmd_compare(args):
    a = bench.Surface.load(args.ref)
    b = bench.Surface.load(args.test)
    _emit(bench.discrepancy(a, b).to_dict(), args)


def cmd_fmri(args):
    data = bayes.load_pvalues(args.data, args.rows, args.cols, args.mask)
    g = build(GraphSpec(args.topology, args.rows, args.cols, args.order))
    prior = bayes.PriorConfig(args.zeta, args.theta_psi, args.gamma_beta, args.sigma2_alpha)
    labels = {"gibbs": "single_site", "sw": "swendsen_wang"}[args.labels]
    cfg = mcmc.MCMCConfig(args.burnin, args.samples, args.thin, args.seed, labels)
    init = bayes.default_init(g.n)
    if args.init_beta is not None:
        init = bayes.BayesParams(init.alpha, args.init_beta, init.psi, init.mu, init.x)
    res = bayes.run_posterior(data, g, prior, cfg, init, label_warmup=args.label_warmup, exact_ratios=args.exact_ratios)
    bayes.write_map_csv(args.out, res.prob, args.cols)
    if args.trace:
        names = list(res.traces)
        np.savetxt(args.trace, np.column_stack([res.traces[k] for k in names]), delimiter=",",
                   header=",".join(names), comments="")
    _emit(res.summary() | {"out": args.out}, args, args.seed)


# -- parser -----------------------------------------------------------------


def _add_graph(p, default_topology="lattice2d-free"):
    p.add_argument("--topology", default=default_topology, choices=["circular-chain", "lattice2d-free", "lattice2d-torus"])
    p.add_argument("--rows", type=int, default=64)
    p.add_argument("--cols", type=int, default=None, help="defaults to --rows for lattices, 1 for chains")
    p.add_argument("--order", default="first", help="first, second, ... fifth (or 1-5)")
    p.add_argument("--config", help="JSON file with a graph block; overrides the graph flags")


def _add_params(p):
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)


def _add_chain(p, burnin=10000, samples=10000):
    p.add_argument("--updater", default="sw", choices=["sw", "gibbs"])
    p.add_argument("--burnin", type=int, default=burnin)
    p.add_argument("--samples", type=int, default=samples)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)


def _add_quad(p):
    p.add_argument("--quad-points", type=int, default=2048)
    p.add_argument("--quad-rule", default="gauss-legendre", choices=["gauss-legendre", "trapezoid"])


def build_parser() -> argparse.ArgumentParser:
    ap = _JsonArgumentParser(prog="fastising", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--threads", type=int, default=None, help="worker threads (ISING_FAST_THREADS overrides)")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_JsonArgumentParser)

    p = sub.add_parser("approx", help="fast approximation of logZ, M or S")
    p.add_argument("--quantity", default="logZ", choices=list(bench.QUANTITIES))
    p.add_argument("--method", default="tilde", choices=["phi", "hphi", "tilde"])
    _add_params(p)
    _add_graph(p)
    _add_quad(p)
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("exact1nn", help="closed form for the circular chain")
    _add_params(p)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_exact1nn)

    p = sub.add_parser("brute", help="exhaustive enumeration (n <= 24)")
    _add_params(p)
    _add_graph(p, "lattice2d-torus")
    p.set_defaults(func=cmd_brute)

    p = sub.add_parser("sample", help="one MCMC chain")
    _add_params(p)
    _add_graph(p)
    _add_chain(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("pathsample", help="path-sampling estimate of logZ")
    _add_params(p)
    _add_graph(p)
    _add_chain(p)
    p.add_argument("--knots", type=int, default=32)
    p.add_argument("--no-warm-start", action="store_true")
    p.set_defaults(func=cmd_pathsample)

    p = sub.add_parser("grid", help="evaluate a surface over an (alpha, beta) grid")
    p.add_argument("--quantity", default="logZ", choices=list(bench.QUANTITIES))
    p.add_argument("--method", default="tilde", choices=["phi", "hphi", "tilde", "exact1nn", "mcmc"])
    g = p.add_mutually_exclusive_group()
    g.add_argument("--grid-file")
    g.add_argument("--default-grid", action="store_true")
    p.add_argument("--subgrid", type=int, nargs=2, metavar=("NA", "NB"))
    p.add_argument("--out", required=True)
    p.add_argument("--knots", type=int, default=32)
    p.add_argument("--no-warm-start", action="store_true")
    _add_graph(p)
    _add_quad(p)
    _add_chain(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("compare", help="L1, R1 and L1/V between two surface CSVs")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fmri", help="posterior activation map from replicated p-values")
    p.add_argument("--data", required=True)
    p.add_argument("--mask")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--topology", default="lattice2d-free", choices=["lattice2d-free", "lattice2d-torus"])
    p.add_argument("--order", default="second")
    p.add_argument("--zeta", type=float, default=10.0)
    p.add_argument("--theta-psi", type=float, default=1.0)
    p.add_argument("--gamma-beta", type=float, default=1.0)
    p.add_argument("--sigma2-alpha", type=float, default=1.0)
    p.add_argument("--burnin", type=int, default=10000)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--label-warmup", type=int, default=bayes.LABEL_WARMUP)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labels", default="gibbs", choices=["gibbs", "sw"])
    p.add_argument("--init-beta", type=float, default=None)
    p.add_argument("--exact-ratios", action="store_true", help="log-gamma MH ratios instead of the Stirling forms")
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.set_defaults(func=cmd_fmri)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except IsingError as exc:
        _fail(exc.kind, str(exc))
    except (OSError, ValueError, KeyError) as exc:
        _fail("io" if isinstance(exc, OSError) else "input", str(exc))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
