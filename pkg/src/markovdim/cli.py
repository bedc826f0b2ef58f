"""Command-line front end.

Subcommands: pressure, dimension (hyperbolic|variational), spectrum-lyapunov,
spectrum-birkhoff, simulate, escape, figure1, validate.  Outputs are CSV or
JSON, deterministic given the config (timestamps only with --stamp), and
every artifact embeds the resolved configuration and tool version.

Exit codes: 0 success, 2 domain/config errors, 3 non-convergence (partial
monotone results still written), 64 usage errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .empirics import escape_statistics, orbit_summaries_csv, simulate_orbit
from .errors import ConvergenceError, MarkovDimError
from .markov import build_sv_map, load_map_config, validate_custom_branches, make_branch
from .potentials import (Potential, builtin_log_derivative, builtin_tail_potential,
                         combine, constant_potential, potential_from_config,
                         validate_potential_config)
from .pressure import gurevich_pressure
from .spectrum import (bowen_dimension, curve_to_csv, full_birkhoff_spectrum_sv,
                       lyapunov_spectrum_curve, sv_alpha_bounds, variational_dimension)

EXIT_OK = 0
EXIT_DOMAIN = 2
EXIT_NOT_CONVERGED = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def _parse_map(spec: str):
    if spec.startswith("sv:"):
        return build_sv_map(float(spec[3:])), {"map": spec}
    return load_map_config(spec), {"map": spec}


def _parse_potential(spec: str, model):
    """Potential mini-language: logT | neg-t-logT:T | zero | const:V | tail:A | path.json"""
    if spec == "logT":
        return builtin_log_derivative(model), {"potential": spec}
    if spec.startswith("neg-t-logT:"):
        t = float(spec.split(":", 1)[1])
        logt = builtin_log_derivative(model)
        return combine(-t, logt, 0.0, constant_potential(1.0), 0.0, logt), {"potential": spec}
    if spec == "zero":
        return constant_potential(0.0), {"potential": spec}
    if spec.startswith("const:"):
        return constant_potential(float(spec.split(":", 1)[1])), {"potential": spec}
    if spec.startswith("tail:"):
        return builtin_tail_potential(float(spec.split(":", 1)[1])), {"potential": spec}
    return potential_from_config(spec), {"potential": spec}


def _emit(args, payload: str):
    if args.out in (None, "-"):
        sys.stdout.write(payload)
    else:
        with open(args.out, "w") as fh:
            fh.write(payload)


def _meta(args, extra: dict) -> dict:
    cfg = dict(extra)
    for k in ("nmax", "tol", "seed", "samples", "horizon", "threads", "format"):
        if hasattr(args, k.replace("-", "_")):
            cfg[k] = getattr(args, k.replace("-", "_"))
    meta = {"tool": "markovdim", "version": __version__, "config": cfg}
    if getattr(args, "stamp", False):
        meta["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    return meta


def _header_lines(meta: dict) -> list[str]:
    lines = [f"tool: markovdim {meta['version']}",
             "config: " + json.dumps(meta["config"], sort_keys=True)]
    if "timestamp" in meta:
        lines.append(f"timestamp: {meta['timestamp']}")
    return lines


def _json_out(meta: dict, result: dict) -> str:
    return json.dumps({**meta, "result": result}, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------
def _cmd_pressure(args) -> int:
    model, m1 = _parse_map(args.map)
    pot, m2 = _parse_potential(args.potential, model)
    res = gurevich_pressure(model, pot, args.tol, args.nmax)
    meta = _meta(args, {**m1, **m2, "command": "pressure"})
    if args.format == "json":
        _emit(args, _json_out(meta, res.to_dict()))
    else:
        lines = _header_lines(meta)
        body = ["N,P_N"] + [f"{n},{p!r}" for n, p in res.per_level]
        body.append(f"# value,{res.value!r}")
        body.append(f"# converged,{res.converged}")
        _emit(args, "\n".join([f"# {l}" for l in lines] + body) + "\n")
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _cmd_dimension(args) -> int:
    if args.kind == "hyperbolic":
        model = build_sv_map(args.lam) if args.map is None else _parse_map(args.map)[0]
        rep = bowen_dimension(model, args.nmax, args.tol)
        meta = _meta(args, {"command": "dimension hyperbolic",
                            "map": args.map or f"sv:{args.lam}"})
        _emit(args, _json_out(meta, rep.to_dict()))
        return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED
    # variational
    model, m1 = _parse_map(args.map or f"sv:{args.lam}")
    phi, m2 = _parse_potential(args.phi, model)
    psi, m3 = _parse_potential(args.psi, model)
    pt = variational_dimension(model, phi, psi, args.alpha, args.nmax, args.tol)
    meta = _meta(args, {**m1, "phi": args.phi, "psi": args.psi, "alpha": args.alpha,
                        "command": "dimension variational"})
    result = {"alpha": pt.alpha, "dimension": pt.dimension, "q_star": pt.q_star,
              "delta_iterations": pt.delta_iterations, "source": pt.source,
              "hypothesis_unverified": not psi.is_constant()}
    _emit(args, _json_out(meta, result))
    return EXIT_OK


def _cmd_spectrum_lyapunov(args) -> int:
    curve = lyapunov_spectrum_curve(args.lam, points=args.points, t_max=args.t_max)
    meta = _meta(args, {"command": "spectrum-lyapunov", "lambda": args.lam,
                        "points": args.points, "t_max": args.t_max})
    if args.format == "json":
        result = {"points": [[p.alpha, p.dimension, p.source] for p in curve.points],
                  "alpha_min": curve.alpha_min, "alpha_max": curve.alpha_max,
                  "discontinuities": [list(d) for d in curve.discontinuities]}
        _emit(args, _json_out(meta, result))
    else:
        _emit(args, curve_to_csv(curve, header_lines=_header_lines(meta)))
    return EXIT_OK


def _cmd_figure1(args) -> int:
    # one-command reproduction of the Lyapunov-spectrum figure data
    curve = lyapunov_spectrum_curve(args.lam, points=args.points, t_max=args.t_max)
    meta = _meta(args, {"command": "figure1", "lambda": args.lam, "points": args.points})
    _emit(args, curve_to_csv(curve, header_lines=_header_lines(meta)))
    return EXIT_OK


def _cmd_spectrum_birkhoff(args) -> int:
    model, m1 = _parse_map(f"sv:{args.lam}")
    phi, m2 = _parse_potential(args.phi, model)
    lo, hi = args.grid_min, args.grid_max
    if lo is None or hi is None:
        a_lo, a_hi = sv_alpha_bounds(args.lam) if args.phi == "logT" else (None, None)
        if a_lo is None:
            raise MarkovDimError("--grid-min/--grid-max required for custom potentials")
        span = a_hi - a_lo
        lo = a_lo + 0.02 * span if lo is None else lo
        hi = a_hi - 0.02 * span if hi is None else hi
    grid = np.linspace(lo, hi, args.grid_points)
    curve = full_birkhoff_spectrum_sv(args.lam, phi, grid, N=args.nmax, tol=args.tol,
                                      threads=args.threads)
    meta = _meta(args, {**m1, **m2, "command": "spectrum-birkhoff",
                        "grid": [lo, hi, args.grid_points]})
    if args.format == "json":
        result = {"points": [[p.alpha, p.dimension, p.source] for p in curve.points],
                  "alpha_min": curve.alpha_min, "alpha_max": curve.alpha_max,
                  "discontinuities": [list(d) for d in curve.discontinuities]}
        _emit(args, _json_out(meta, result))
    else:
        _emit(args, curve_to_csv(curve, N=args.nmax, tol=args.tol,
                                 header_lines=_header_lines(meta)))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    model, m1 = _parse_map(args.map)
    rec = simulate_orbit(model, args.x0, args.horizon)
    meta = _meta(args, {**m1, "command": "simulate", "x0": args.x0})
    result = {"start": rec.start, "classification": rec.classification,
              "steps": rec.steps, "itinerary": rec.itinerary.tolist(),
              "birkhoff_logT": rec.birkhoff_sums["logT"].tolist()}
    _emit(args, _json_out(meta, result))
    return EXIT_OK


def _cmd_escape(args) -> int:
    model, m1 = _parse_map(args.map)
    meta = _meta(args, {**m1, "command": "escape"})
    if args.per_orbit:
        _emit(args, orbit_summaries_csv(model, args.samples, args.horizon, args.seed,
                                        threads=args.threads,
                                        header_lines=_header_lines(meta)))
    else:
        stats = escape_statistics(model, args.samples, args.horizon, args.seed,
                                  threads=args.threads)
        _emit(args, _json_out(meta, stats.to_dict()))
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DOMAIN
    except json.JSONDecodeError as exc:
        sys.stderr.write(f"error: malformed JSON at line {exc.lineno}: {exc.msg}\n")
        return EXIT_DOMAIN
    violations = validate_config_dict(cfg)
    report = {"path": args.config, "violations": violations, "ok": not violations}
    sys.stdout.write(json.dumps(report, sort_keys=True) + "\n")
    return EXIT_OK if not violations else EXIT_DOMAIN


def validate_config_dict(cfg: dict) -> list[str]:
    """Dispatch a parsed config to the right checker (map or potential)."""
    if "branches" in cfg or "sv_lambda" in cfg:
        if "sv_lambda" in cfg:
            lam = cfg["sv_lambda"]
            return [] if 0.5 < lam < 1.0 else [f"sv_lambda must lie in (1/2, 1), got {lam}"]
        try:
            branches = [make_branch(int(b["index"]), float(b["left"]), float(b["right"]),
                                    float(b["slope"])) for b in cfg["branches"]]
        except (KeyError, TypeError, ValueError, MarkovDimError) as exc:
            return [f"branch specs malformed: {exc}"]
        transitions = cfg.get("transitions")
        if transitions is None:
            return ["missing transitions"]
        if not isinstance(transitions, str):
            transitions = np.asarray(transitions, dtype=bool)
        return validate_custom_branches(branches, transitions, cfg.get("tail"))
    return validate_potential_config(cfg)


def validate_config(path: str) -> dict:
    """Programmatic form of the ``validate`` subcommand."""
    with open(path) as fh:
        cfg = json.load(fh)
    violations = validate_config_dict(cfg)
    return {"path": path, "violations": violations, "ok": not violations}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="markovdim",
                description="Pressure, dimension, and multifractal spectra for "
                            "countable-Markov expanding interval maps")
    p.add_argument("--version", action="version", version=f"markovdim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt_default="json"):
        sp.add_argument("--out", default="-", help="output path (default stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default=fmt_default)
        sp.add_argument("--stamp", action="store_true",
                        help="include a timestamp header (off by default; outputs are "
                             "deterministic without it)")
        sp.add_argument("--threads", type=int,
                        default=int(os.environ.get("MARKOVDIM_THREADS", "1")),
                        help="worker threads (default from MARKOVDIM_THREADS or 1); "
                             "results are independent of this knob")

    sp = sub.add_parser("pressure", help="pressure of a potential by increasing truncations")
    sp.add_argument("--map", required=True, help="sv:LAMBDA or a map-config path")
    sp.add_argument("--potential", required=True,
                    help="logT | neg-t-logT:T | zero | const:V | tail:A | config path")
    sp.add_argument("--nmax", type=int, default=1024)
    sp.add_argument("--tol", type=float, default=1e-8)
    common(sp)
    sp.set_defaults(fn=_cmd_pressure)

    sp = sub.add_parser("dimension", help="hyperbolic (Bowen) or variational dimension")
    sp.add_argument("kind", choices=("hyperbolic", "variational"))
    sp.add_argument("--lambda", dest="lam", type=float, default=None)
    sp.add_argument("--map", default=None)
    sp.add_argument("--phi", default="logT")
    sp.add_argument("--psi", default="const:1")
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--nmax", type=int, default=512)
    sp.add_argument("--tol", type=float, default=1e-5)
    common(sp)
    sp.set_defaults(fn=_cmd_dimension)

    sp = sub.add_parser("spectrum-lyapunov", help="closed-form Lyapunov spectrum sweep")
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--points", type=int, default=200)
    sp.add_argument("--t-max", dest="t_max", type=float, default=40.0)
    common(sp, fmt_default="csv")
    sp.set_defaults(fn=_cmd_spectrum_lyapunov)

    sp = sub.add_parser("spectrum-birkhoff", help="variational Birkhoff spectrum with "
                                                  "the escape value appended")
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--phi", default="logT")
    sp.add_argument("--grid-min", type=float, default=None)
    sp.add_argument("--grid-max", type=float, default=None)
    sp.add_argument("--grid-points", type=int, default=21)
    sp.add_argument("--nmax", type=int, default=128)
    sp.add_argument("--tol", type=float, default=1e-3)
    common(sp, fmt_default="csv")
    sp.set_defaults(fn=_cmd_spectrum_birkhoff)

    sp = sub.add_parser("simulate", help="one orbit with itinerary and Birkhoff sums")
    sp.add_argument("--map", required=True)
    sp.add_argument("--x0", type=float, required=True)
    sp.add_argument("--horizon", type=int, default=100)
    common(sp)
    sp.set_defaults(fn=_cmd_simulate)

    sp = sub.add_parser("escape", help="escape statistics over sampled orbits")
    sp.add_argument("--map", required=True)
    sp.add_argument("--samples", type=int, default=10000)
    sp.add_argument("--horizon", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--per-orbit", action="store_true", help="emit per-orbit CSV")
    common(sp)
    sp.set_defaults(fn=_cmd_escape)

    sp = sub.add_parser("figure1", help="Lyapunov spectrum data with the jump point "
                                        "appended (CSV)")
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--points", type=int, default=200)
    sp.add_argument("--t-max", dest="t_max", type=float, default=40.0)
    common(sp, fmt_default="csv")
    sp.set_defaults(fn=_cmd_figure1)

    sp = sub.add_parser("validate", help="check a map or potential config without running")
    sp.add_argument("--config", required=True)
    sp.set_defaults(fn=_cmd_validate)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "dimension":
        if args.kind == "hyperbolic" and args.lam is None and args.map is None:
            parser.error("dimension hyperbolic needs --lambda or --map")
        if args.kind == "variational" and args.alpha is None:
            parser.error("dimension variational needs --alpha")
    try:
        return args.fn(args)
    except ConvergenceError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_NOT_CONVERGED
    except MarkovDimError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
