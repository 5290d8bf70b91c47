"""Command-line entry point: ``narate <subcommand> --config FILE``.

Each run reads one JSON config, dispatches to the solver and writes a
:class:`~narate.records.ResultRecord` as CSV or JSON.  Threads for the
Monte-Carlo runs come from ``NARATE_THREADS`` (default 1); results never
depend on it.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import config as cfgmod
from .errors import ConfigError, NarateError
from .model import DistortionSpec, FiniteMarkovSource, StateSpaceModel
from .records import ResultRecord, emit
from .waterfill import allocate, nats_to_bits, rate_of

log = logging.getLogger("narate")


def _threads():
    raw = os.environ.get("NARATE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"NARATE_THREADS must be an integer, got {raw!r}") from exc
    return max(1, n)


def _run_waterfill(cfg):
    lam = np.asarray(cfg.eigenvalues)
    if isinstance(cfg.D, list):
        rows = []
        for D in cfg.D:
            alloc = allocate(lam, D)
            r = rate_of(alloc)
            rows.append([D, r, nats_to_bits(r), alloc.water_level])
        return {"n_points": len(rows)}, ["D", "rate_nats", "rate_bits", "water_level"], rows
    alloc = allocate(lam, cfg.D)
    r = rate_of(alloc)
    rows = [
        [i + 1, l, d, 0.5 * float(np.log(l / d))]
        for i, (l, d) in enumerate(zip(alloc.eigenvalues, alloc.deltas))
    ]
    scalars = {
        "D": cfg.D,
        "rate_nats": r,
        "rate_bits": nats_to_bits(r),
        "water_level": alloc.water_level,
        "total_distortion": alloc.total_distortion,
        "active": int(np.count_nonzero(alloc.active)),
    }
    return scalars, ["component", "lambda", "delta", "rate_nats"], rows


def _run_finite(cfg):
    from .finite.solver import sweep

    source = FiniteMarkovSource.from_dict(cfg.source)
    dist = dict(cfg.distortion)
    if dist.get("kind") == "hamming" and "size" not in dist:
        dist["size"] = source.alphabet_size
    rho = DistortionSpec.from_dict(dist)
    out = sweep(source, rho, cfg.s_grid, warm_start=cfg.warm_start, tol=cfg.tol, max_iter=cfg.max_iter)
    rows = [
        [p.s, p.rate, p.rate_bits, p.distortion, rep.iterations, bool(rep.converged)]
        for p, rep in out
    ]
    scalars = {
        "horizon": source.horizon,
        "n_points": len(rows),
        "all_converged": all(r[-1] for r in rows),
    }
    return scalars, ["s", "rate_nats", "rate_bits", "distortion", "iterations", "converged"], rows


def _run_gauss(cfg):
    from .gauss.riccati import (
        distortion_for_power,
        finite_horizon_rate,
        gain_schedule,
        matching_check,
        riccati_infinite,
    )

    model = StateSpaceModel.from_dict(cfg.model)
    kw = {"decoder": cfg.decoder, "channel": cfg.channel}
    D = cfg.D if cfg.power is None else distortion_for_power(model, cfg.power, cfg.Q, **kw)
    if not cfg.steady_state:
        if cfg.horizon is None:
            raise ConfigError("horizon: required when steady_state is false")
        sched = gain_schedule(model, D, cfg.Q, cfg.horizon, **kw)
        rows = []
        for st in sched:
            r = rate_of(st.gains.allocation)
            rows.append([st.t, float(np.trace(st.Lambda)), st.trace_T, r, nats_to_bits(r), st.channel.power])
        rate = finite_horizon_rate(sched)
        scalars = {"D": D, "Q": cfg.Q, "horizon": cfg.horizon, "rate_nats": rate, "rate_bits": nats_to_bits(rate)}
        return scalars, ["t", "trace_Lambda", "trace_T", "rate_nats", "rate_bits", "power"], rows
    sol = riccati_infinite(model, D, cfg.Q, tol=max(cfg.tol, 1e-13), **kw)
    match = matching_check(sol)
    scalars = {
        "D": D,
        "Q": cfg.Q,
        "sigma": sol.sigma,
        "Lambda": sol.Lambda,
        "lambda": sol.eigenvalues,
        "delta": sol.deltas,
        "water_level": sol.allocation.water_level,
        "P": sol.power,
        "component_powers": list(sol.channel.component_powers),
        "rate_nats": sol.rate,
        "rate_bits": nats_to_bits(sol.rate),
        "capacity_nats": match.capacity,
        "capacity_sum_nats": match.capacity_sum,
        "match_residual": match.residual,
        "riccati_residual": sol.residual,
        "iterations": sol.iterations,
    }
    return scalars, None, None


def _run_simulate(cfg):
    from .gauss.simulate import simulate

    model = StateSpaceModel.from_dict(cfg.model)
    sim = simulate(
        model, cfg.D, cfg.Q, cfg.horizon, cfg.trials, seed=cfg.seed, steady_state=cfg.steady_state,
        keep_trace=cfg.trace, decoder=cfg.decoder, threads=_threads(),
    )
    rows = [[i, d] for i, d in enumerate(sim.trial_distortion)]
    scalars = {
        "D": cfg.D,
        "mean_distortion": sim.mean_distortion,
        "std_error": sim.std_error,
        "z_score": sim.z_score,
        "relative_error": abs(sim.mean_distortion - cfg.D) / cfg.D,
        "n_symbols": sim.n_symbols,
        "lag1_gamma": sim.lag1_autocorrelation,
        "lag1_reproduction": sim.reproduction_lag1,
        "empirical_power": sim.empirical_power,
        "design_power": sim.design_power,
    }
    tables = {}
    if sim.trace is not None:
        cols = sim.trace.columns()
        tables["trace"] = (list(cols), np.column_stack(list(cols.values())).tolist())
    return scalars, ["trial", "distortion"], rows, tables


_DISPATCH = {
    "waterfill": _run_waterfill,
    "finite-rdf": _run_finite,
    "gauss-realize": _run_gauss,
    "simulate": _run_simulate,
}


def run(cfg: cfgmod.ExperimentConfig) -> ResultRecord:
    """Execute one experiment and return its record (nothing is written)."""
    out = _DISPATCH[cfg.subcommand](cfg)
    scalars, columns, rows = out[:3]
    tables = out[3] if len(out) > 3 else {}
    h = cfg.config_hash
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds") if cfg.timestamp else None
    return ResultRecord(h[:16], h, cfg.subcommand, scalars, columns, rows, tables, stamp)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON experiment config")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=cfgmod.FORMATS, help="output format (default: csv)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="narate", description="Nonanticipative rate distortion experiments.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    helps = {
        "waterfill": "reverse water-filling over given eigenvalues",
        "finite-rdf": "Lagrangian sweep of the nonanticipative RDF of a finite Markov source",
        "gauss-realize": "steady or finite-horizon realization of a Gauss-Markov source",
        "simulate": "Monte-Carlo run of the realization",
    }
    for name in cfgmod.SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        path = args.config
        try:
            with open(path) as fh:
                data = cfgmod.parse_json(fh.read(), path)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
        data.setdefault("subcommand", args.subcommand)
        if data["subcommand"] != args.subcommand:
            raise ConfigError(f"subcommand: config says {data['subcommand']!r}, command line says {args.subcommand!r}")
        cfg = cfgmod.from_dict(data, base=os.path.dirname(os.path.abspath(path)))
        cfg = cfg.with_overrides(seed=args.seed, out=args.out, format=args.format)
        record = run(cfg)
        written = emit(record, cfg.format, cfg.out, stream=sys.stdout)
        for p in written:
            log.info("wrote %s", p)
    except ConfigError as exc:
        print(f"narate: config error: {exc}", file=sys.stderr)
        return 2
    except (NarateError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"narate {args.subcommand}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
