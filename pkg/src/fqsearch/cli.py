"""Command-line entry point: ``fqsearch <subcommand> ...``.

Every subcommand writes its JSON result to stdout (or ``--out``).  Failures
exit nonzero with an error object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import estimate_period, estimate_pmax
from .classical import averaged_return_probability, fit_spectral_dimension
from .errors import FQSearchError, InsufficientPoints
from .io import dumps, read_json, read_series, write_csv, write_json
from .lattice import Family, FractalSpec, generate, metrics, rle_dump
from .pipeline import (ClassicalConfig, ExperimentConfig, export_plot_data,
                       resolve_starts, run_pipeline)
from .quantum import evolve, resolve_target
from .scaling import evaluate_hypotheses, fit_log_correction, fit_power_law

log = logging.getLogger("fqsearch")


def _lattice_args(p, boundary_default=None):
    p.add_argument("--family", choices=[f.value for f in Family], default=None)
    p.add_argument("--s", type=int, default=None)
    p.add_argument("--s-prime", type=int, default=None)
    p.add_argument("--stage", type=int, default=None)
    p.add_argument("--boundary", choices=["fixed", "periodic"], default=boundary_default)


def _spec(args, config: dict) -> FractalSpec:
    """Flags override the config file, which overrides the built-in defaults."""
    def pick(name, key, default=None):
        v = getattr(args, name, None)
        if v is not None:
            return v
        return config.get(key, default)

    family = pick("family", "family")
    if family is None:
        raise SystemExit("--family is required")
    boundary = pick("boundary", "boundary")
    if boundary is None:
        boundary = "fixed" if family == "carpet" and args.command == "crw" else "periodic"
    return FractalSpec(Family(family), int(pick("s", "s")), int(pick("s_prime", "s_prime", config.get("sPrime"))),
                       int(pick("stage", "stage", 1)), boundary)


def _emit(args, payload: dict, name: str = "result.json") -> None:
    if args.out:
        out = Path(args.out)
        if out.suffix.lower() != ".json":
            out = out / name
        write_json(out, payload)
    sys.stdout.write(dumps(payload))


def cmd_lattice(args, config):
    spec = _spec(args, config)
    m = metrics(spec)
    payload = {**spec.to_dict(), "L": m.L, "N": m.N, "M": m.M, "dF": m.d_f, "dE": m.d_e}
    if args.dump:
        lat = generate(spec)
        Path(args.dump).write_text(rle_dump(lat.mask), encoding="utf-8")
    _emit(args, payload, "lattice.json")


def cmd_crw(args, config):
    spec = _spec(args, config)
    lat = generate(spec)
    start = str(args.start if args.start is not None else config.get("start", "random:32"))
    if start.isdigit():
        start = f"site:{start}"
    elif start.startswith("random:"):
        start = int(start.split(":", 1)[1])
    starts = resolve_starts(lat, start, args.seed)
    curve = averaged_return_probability(lat, starts, args.trials, args.horizon,
                                        seed=args.seed, threads=args.threads)
    window = tuple(args.fit_window) if args.fit_window else None
    est = fit_spectral_dimension(curve, window)
    if args.csv:
        write_csv(args.csv, ["t", "count", "probability"],
                  [np.arange(len(curve.counts)), curve.counts, curve.probability])
    payload = {**est.to_dict(), "trials": curve.trials, "horizon": curve.horizon,
               "starts": [int(s) for s in starts], **spec.to_dict()}
    _emit(args, payload, "crw.json")


def cmd_qsearch(args, config):
    spec = _spec(args, config)
    lat = generate(spec)
    target = args.target if args.target is not None else config.get("target", "auto")
    x0 = resolve_target(lat, target)
    steps = args.steps
    if steps is None:
        steps = default_steps(spec)
    run = evolve(lat, x0, steps)
    if args.csv:
        write_csv(args.csv, ["t", "P"], [run.t, run.probability])
    payload = {"tool": "fqsearch", "version": __version__, **lat.metadata(),
               "target": x0, "targetCoord": [int(c) for c in lat.coords[x0]],
               "steps": run.steps, "maxNormError": run.max_norm_error,
               "series": args.csv}
    _emit(args, payload, "qsearch.json")


def default_steps(spec: FractalSpec) -> int:
    """Step budget scaled from the large-stage guidance (1e5..1e6 for carpets,
    5e3..1e5 for sponges) down by N: 16 sqrt(N), clamped to that range's ceiling."""
    n = metrics(spec).N
    ceiling = 1_000_000 if spec.family is Family.CARPET else 100_000
    return int(min(ceiling, max(256, 16 * math.ceil(math.sqrt(n)))))


def cmd_analyze(args, config):
    series = read_series(args.input, args.column)
    q = estimate_period(series, window=args.window)
    pm = estimate_pmax(series, q.Q)
    payload = {"Q": q.Q, "dominantFrequency": q.dominant_frequency, "Pmax": pm.Pmax,
               "stddev": pm.stddev, "groups": pm.groups}
    _emit(args, payload, "analysis.json")


def _range_filter(rows, rng):
    if not rng:
        return rows
    lo, hi = rng
    return [r for r in rows if "stage" not in r or lo <= int(r["stage"]) <= hi]


def cmd_scaling(args, config):
    rows = read_json(args.points)
    meta = read_json(args.metrics)
    spec = FractalSpec(Family(meta["family"]), int(meta["s"]), int(meta["sPrime"]),
                       int(meta.get("stage", 1)), meta.get("boundary", "periodic"))
    beta_rows = _range_filter(rows, args.beta_stages)
    alpha_rows = _range_filter(rows, args.alpha_stages)
    beta = fit_power_law([(r["N"], r["Q"]) for r in beta_rows], allow_two_point=args.allow_two_point)
    alpha = fit_power_law([(r["N"], r["Pmax"]) for r in alpha_rows], allow_two_point=args.allow_two_point)
    payload = {"label": spec.label, "betaFit": beta.to_dict(), "alphaFit": alpha.to_dict()}
    try:
        payload["logCorrection"] = fit_log_correction([(r["N"], r["Q"]) for r in beta_rows]).to_dict()
    except InsufficientPoints as exc:
        payload["logCorrection"] = exc.to_dict()
    d_s = args.ds if args.ds is not None else meta.get("dS")
    if d_s is not None:
        rep = evaluate_hypotheses(beta, alpha, metrics(spec), float(d_s), args.ds_err,
                                  s=spec.s, s_prime=spec.s_prime, label=spec.label)
        payload["report"] = rep.to_dict()
        if args.csv:
            write_csv(args.csv, ["label", "d_s", "beta", "beta_err"],
                      [[spec.label], [rep.d_s], [rep.beta], [rep.beta_err]])
    _emit(args, payload, "scaling.json")


def cmd_pipeline(args, config):
    if not config:
        raise SystemExit("pipeline needs --config")
    config = dict(config)
    if args.out:
        config["out"] = args.out
    if args.threads is not None:
        config["threads"] = args.threads
    if args.seed is not None:
        config["seed"] = args.seed
    if isinstance(config.get("classical"), dict):
        config["classical"] = ClassicalConfig(**config["classical"])
    cfg = ExperimentConfig.from_dict(config)
    manifest = run_pipeline(cfg)
    sys.stdout.write(dumps({"manifest": str(Path(cfg.out) / "manifest.json"),
                            "manifestHash": manifest["manifestHash"],
                            "scaling": manifest["scaling"]["status"]}))


def cmd_plotdata(args, config):
    out = Path(args.out or "beta_vs_ds_plot.csv")
    if out.suffix.lower() != ".csv":
        out = out / "beta_vs_ds_plot.csv"
    path = export_plot_data(args.manifests, out, literature=args.literature)
    sys.stdout.write(dumps({"plotData": str(path)}))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags take precedence")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fqsearch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lattice", parents=[common], help="lattice metadata")
    _lattice_args(p)
    p.add_argument("--dump", help="write a run-length-encoded occupancy map here")
    p.set_defaults(func=cmd_lattice)

    p = sub.add_parser("crw", parents=[common], help="classical return probability and d_s")
    _lattice_args(p)
    p.add_argument("--trials", type=int, default=1_000_000)
    p.add_argument("--horizon", type=int, default=4000)
    p.add_argument("--start", default=None, help='site id, "center", or "random:<R>" (default random:32)')
    p.add_argument("--fit-window", type=int, nargs=2, metavar=("TMIN", "TMAX"))
    p.add_argument("--csv", help="write t,count,probability here")
    p.set_defaults(func=cmd_crw)

    p = sub.add_parser("qsearch", parents=[common], help="quantum search time series")
    _lattice_args(p)
    p.add_argument("--target", default=None, help='site id, "auto", "origin" or "center"')
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--csv", help="write t,P here")
    p.set_defaults(func=cmd_qsearch)

    p = sub.add_parser("analyze", parents=[common], help="Q and Pmax from a t,P CSV")
    p.add_argument("input")
    p.add_argument("--column", default="P")
    p.add_argument("--window", choices=["hann"], default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("scaling", parents=[common], help="fit exponents and test hypotheses")
    p.add_argument("points", help="JSON array of {N, Q, Pmax[, stage]}")
    p.add_argument("metrics", help="lattice metadata JSON (output of `lattice`)")
    p.add_argument("--ds", type=float, default=None)
    p.add_argument("--ds-err", type=float, default=0.0)
    p.add_argument("--beta-stages", type=int, nargs=2)
    p.add_argument("--alpha-stages", type=int, nargs=2)
    p.add_argument("--allow-two-point", action="store_true")
    p.add_argument("--csv", help="write the beta-vs-d_s row here")
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("pipeline", parents=[common], help="run a full experiment")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("plotdata", parents=[common], help="beta vs d_s plot bundle")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--literature", help="CSV with label,d_s,beta[,beta_err]")
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    config = read_json(args.config) if args.config else {}
    if args.seed is None and args.command != "pipeline":
        args.seed = int(config.get("seed", 0))
    if args.threads is None and args.command != "pipeline":
        args.threads = int(config.get("threads", 1))
    try:
        args.func(args, config)
    except FQSearchError as exc:
        sys.stderr.write(json.dumps(exc.to_dict()) + "\n")
        return 2
    except (ValueError, OSError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
