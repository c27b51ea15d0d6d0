"""
Command-line front end.

Exit codes: 0 success, 1 failed checks or runtime failure, 2 bad
configuration (including unknown presets and invalid flags).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Optional

from . import __version__
from . import asymptotics as asy
from . import mean_field as mf
from .errors import ConfigError, DomainError, MfgStopError
from .monte_carlo import (ExperimentConfig, ExperimentReport, default_threads,
                          run, uniforms)
from .n_player import enumerate_equilibria, make_sample
from .report import (CURVE_COLUMNS, FLOW_COLUMNS, csv_text, emit_report,
                     json_text, output_dir)
from .signal_models import PRESET_SEEDS, PRESETS, from_config


EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


# -- argument helpers --------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _alpha_grid(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("alpha grid must be lo:hi:step")
    lo, hi, step = (float(p) for p in parts)
    if not step > 0 or hi < lo:
        raise argparse.ArgumentTypeError("alpha grid needs lo <= hi and step > 0")
    return lo, hi, step


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def _model_section(args) -> dict[str, Any]:
    """Model and params from ``--config`` with ``--model/--r/--c/--n`` on top."""
    doc = _load_json(args.config) if args.config else {}
    if args.model and args.config:
        raise ConfigError("give either --model or --config, not both")
    cfg = {"model": dict(doc.get("model", {})), "params": dict(doc.get("params", {}))}
    if args.model:
        cfg["model"] = {"preset": args.model}
    if not cfg["model"]:
        raise ConfigError("a model is required (--model PRESET or --config PATH)")
    for key in ("r", "c", "n"):
        v = getattr(args, key, None)
        if v is not None:
            cfg["params"][key] = v
    return cfg


def _model_args(p: argparse.ArgumentParser, with_n: bool = True):
    p.add_argument("--model", help=f"preset name ({', '.join(sorted(PRESETS))})")
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--r", type=float, help="reward level")
    p.add_argument("--c", type=float, help="coupling strength")
    if with_n:
        p.add_argument("--n", type=int, help="number of players")


# -- solve -------------------------------------------------------------------

def cmd_solve(args) -> int:
    model, params = from_config(_model_section(args))
    sols = mf.find_solutions(model, params, args.t)
    doc: dict[str, Any] = {
        "version": __version__,
        "model": model.to_config(),
        "params": {"r": params.r, "c": params.c},
        "t": args.t,
        "roots": [s.to_dict() for s in sols],
        "quartet": mf.quartet_of(sols).to_dict(),
    }
    rows = []
    if args.grid:
        lo = mf.flow(model, params, "minimal", args.grid)
        hi = mf.flow(model, params, "maximal", args.grid)
        rows = [{"t": t, "rho_min": a, "rho_max": b}
                for t, a, b in zip(lo.grid, lo.values, hi.values)]
    doc["flow"] = rows
    if args.emit == "csv":
        if not rows:
            raise ConfigError("--emit csv needs --grid")
        text = csv_text(rows, FLOW_COLUMNS)
    else:
        text = json_text(doc)
    sys.stdout.write(text)
    if args.out:
        out = output_dir(args.out)
        (out).mkdir(parents=True, exist_ok=True)
        (out / "solve.json").write_text(json_text(doc))
        if rows:
            (out / "flow.csv").write_text(csv_text(rows, FLOW_COLUMNS))
    return EXIT_OK


# -- nplayer -----------------------------------------------------------------

def _pinned_seed(model_cfg: dict) -> Optional[int]:
    name = model_cfg.get("preset")
    return PRESET_SEEDS.get(name) if name else None


def cmd_nplayer(args) -> int:
    cfg = _model_section(args)
    model, params = from_config(cfg)
    n = params.n
    if n is None:
        raise ConfigError("--n is required")
    seed = args.seed if args.seed is not None else _pinned_seed(cfg["model"])
    if seed is None:
        raise ConfigError("--seed is required for models without a pinned seed")
    rows = []
    for s in range(args.samples):
        eq = enumerate_equilibria(make_sample(model, params, args.t,
                                              uniforms(seed, s, n)))
        rows.append({"sample": s, **eq.to_dict()})
    if args.emit == "csv":
        text = csv_text(rows, ("sample", "n", "min", "max", "K", "K_star"))
    else:
        text = json_text({"version": __version__, "seed": seed, "t": args.t,
                          "model": model.to_config(),
                          "params": {"r": params.r, "c": params.c, "n": n},
                          "samples": rows})
    sys.stdout.write(text)
    return EXIT_OK


# -- simulate ----------------------------------------------------------------

_SIM_FLAGS = {
    "n": "n", "samples": "samples", "seed": "seed", "t": "t", "grid": "grid",
    "eps": "eps", "x": "x", "set_selector": "set_selector", "delta": "delta",
    "mode": "mode", "tol": "tol", "n_ladder": "n_ladder", "betas": "betas",
    "flow_kind": "flow_kind", "r": "r", "c": "c",
}


def experiment_config(args) -> ExperimentConfig:
    """Merge a config file (plain, experiment or full report) with flags."""
    base: dict[str, Any] = {}
    if args.config:
        doc = _load_json(args.config)
        if isinstance(doc.get("config"), dict) and "experiment" in doc["config"]:
            base = dict(doc["config"])
        elif isinstance(doc.get("experiment"), dict):
            base = dict(doc["experiment"])
        if "model" in doc and not isinstance(doc.get("config"), dict):
            base["model"] = doc["model"]
        for key, v in (doc.get("params") or {}).items():
            base.setdefault(key, v)
    if args.model:
        if args.config:
            raise ConfigError("give either --model or --config, not both")
        base["model"] = {"preset": args.model}
    if "model" not in base:
        raise ConfigError("a model is required (--model PRESET or --config PATH)")
    for attr, key in _SIM_FLAGS.items():
        v = getattr(args, attr, None)
        if v is not None:
            base[key] = v
    base["experiment"] = args.experiment
    base.setdefault("n", 1000)
    if base.get("seed") is None:
        seed = _pinned_seed(base["model"])
        if seed is None:
            raise ConfigError("--seed is required for models without a pinned seed")
        base["seed"] = seed
    return ExperimentConfig.from_dict(base)


def cmd_simulate(args) -> int:
    cfg = experiment_config(args)
    report = run(cfg, threads=args.threads)
    out = output_dir(args.out, "mfgstop-output")
    formats = ["json", "csv"] + ([] if args.no_svg else ["svg"])
    paths = emit_report(report, out, args.stem or cfg.experiment, formats)
    for p in paths:
        print(p)
    return EXIT_OK


# -- asymptotics -------------------------------------------------------------

def cmd_asymptotics(args) -> int:
    if args.action == "curve":
        if args.alpha_grid is None:
            raise ConfigError("curve needs --alpha-grid lo:hi:step")
        sys.stdout.write(csv_text(asy.bound_curve(*args.alpha_grid), CURVE_COLUMNS))
        return EXIT_OK
    if args.alpha is None:
        raise ConfigError("--alpha is required")
    if (args.x is None) != (args.beta is None):
        raise ConfigError("--x and --beta go together")
    sys.stdout.write(json_text(asy.alpha_stats(args.alpha, args.x, args.beta).to_dict()))
    return EXIT_OK


# -- reproduce ---------------------------------------------------------------

def _check(name: str, value, passed: bool, expected: str) -> dict:
    return {"name": name, "value": value, "expected": expected, "passed": bool(passed)}


def _rows(report: ExperimentReport, hist: str) -> list[dict]:
    return report.histograms[hist]["rows"]


def _mass(rows, lo: float, hi: float) -> int:
    return sum(r["count"] for r in rows if lo <= r["k_over_n"] <= hi)


def _est(report, name) -> float:
    return report.stats[name].estimate


def _repro_51(threads):
    cfg = ExperimentConfig("extremal", {"preset": "example-5.1"}, n=2000,
                           seed=PRESET_SEEDS["example-5.1"], samples=4000)
    rep = run(cfg, threads)
    p_top = _est(rep, "min_is_n")
    rows = _rows(rep, "min")
    rest = cfg.samples - _mass(rows, 1.0, 1.0)
    near_half = _mass(rows, 0.45, 0.55)
    checks = [
        _check("P(min/n = 1)", p_top, abs(p_top - 0.5) <= 0.03, "0.5 +- 0.03"),
        _check("remaining mass within 0.05 of 1/2", near_half,
               near_half == rest, f"{rest} samples"),
    ]
    return [("extremal", rep)], checks


def _repro_56(threads):
    cfg = ExperimentConfig("histogram", {"preset": "example-5.6"}, n=10_000,
                           seed=PRESET_SEEDS["example-5.6"], samples=1000,
                           mode="minimal", eps=0.05)
    rep = run(cfg, threads)
    lo, hi = _est(rep, "mass_near[0.5]"), _est(rep, "mass_near[1]")
    checks = [
        _check("mass near 1/2", lo, 0.4 <= lo <= 0.6, "about 1/2"),
        _check("mass near 1", hi, 0.4 <= hi <= 0.6, "about 1/2"),
        _check("mass near the two roots", lo + hi, lo + hi >= 0.99, ">= 0.99"),
    ]
    return [("histogram", rep)], checks


def _repro_57(threads):
    cfg = ExperimentConfig("histogram", {"preset": "example-5.7"}, n=10_000,
                           seed=PRESET_SEEDS["example-5.7"], samples=1000,
                           mode="minimal", eps=0.05)
    rep = run(cfg, threads)
    seg = _est(rep, "mass_near[[0.5,1]]")
    rows = _rows(rep, "main")
    inner = _mass(rows, 0.6, 0.9) / cfg.samples
    checks = [
        _check("mass near [1/2, 1]", seg, seg >= 0.99, ">= 0.99"),
        _check("mass inside (0.6, 0.9)", inner, inner >= 0.1, ">= 0.1"),
    ]
    return [("histogram", rep)], checks


def _repro_58(threads):
    cfg = ExperimentConfig("extremal", {"preset": "example-5.8"}, n=10_000,
                           seed=PRESET_SEEDS["example-5.8"], samples=1000)
    rep = run(cfg, threads)
    lo, hi = _est(rep, "min_is_0"), _est(rep, "max_is_n")
    checks = [
        _check("P(min = 0)", lo, lo == 1.0, "exactly 1"),
        _check("P(max = n)", hi, hi == 1.0, "exactly 1"),
    ]
    return [("extremal", rep)], checks


def _repro_62(name):
    def go(threads):
        seed = PRESET_SEEDS[name]
        hist = run(ExperimentConfig("histogram", {"preset": name}, n=10_000,
                                    seed=seed, samples=4000), threads)
        near = run(ExperimentConfig("near", {"preset": name}, n=10_000, seed=seed,
                                    samples=4000, x=0.5, eps=0.02), threads)
        rows = _rows(hist, "main")
        p = _est(near, "p_nonempty")
        thin = _mass(rows, 0.25, 0.75) / hist.config["samples"]
        checks = [
            _check("P(window at 1/2 nonempty)", p, 0.09 <= p <= 0.145,
                   "[0.09, 0.145]"),
            _check("mode at 0", _mass(rows, 0.0, 0.0), _mass(rows, 0.0, 0.0)
                   == hist.config["samples"], "every sample"),
            _check("mode at 1", _mass(rows, 1.0, 1.0), _mass(rows, 1.0, 1.0)
                   == hist.config["samples"], "every sample"),
            _check("members per sample in [1/4, 3/4]", thin, thin < 0.5, "< 0.5"),
        ]
        return [("histogram", hist), ("near", near)], checks
    return go


def _repro_uniform02(threads):
    cfg = ExperimentConfig("near", {"preset": "uniform02"}, n=100,
                           seed=PRESET_SEEDS["uniform02"], samples=20_000,
                           x=0.5, eps=0.1)
    rep = run(cfg, threads)
    gap = rep.summary["exact_gap_in_se"]
    return [("near", rep)], [_check("|MC - exact| in standard errors", gap,
                                    gap <= 3, "<= 3")]


REPRODUCTIONS: dict[str, Callable] = {
    "example-5.1": _repro_51,
    "example-5.6": _repro_56,
    "example-5.7": _repro_57,
    "example-5.8": _repro_58,
    "example-6.2": _repro_62("example-6.2"),
    "tent": _repro_62("tent"),
    "uniform02": _repro_uniform02,
}


def reproduce(name: str, out: Path, threads: Optional[int] = None) -> tuple[int, list[dict]]:
    """Run a preset's canonical experiments, write artifacts, return exit code."""
    if name not in REPRODUCTIONS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(REPRODUCTIONS)}")
    reports, checks = REPRODUCTIONS[name](threads)
    for kind, rep in reports:
        rep.summary["checks"] = checks
        emit_report(rep, out, f"{name}_{kind}")
    (out / f"{name}_checks.json").write_text(json_text(
        {"preset": name, "version": __version__, "checks": checks}))
    return (EXIT_OK if all(c["passed"] for c in checks) else EXIT_FAILED), checks


def cmd_reproduce(args) -> int:
    out = output_dir(args.out, "mfgstop-output")
    code, checks = reproduce(args.preset, out, args.threads)
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['value']} "
              f"(expected {c['expected']})")
    return code


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfgstop", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="mean field roots, quartet and flows")
    _model_args(p, with_n=False)
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--grid", type=_floats, help="comma-separated times for the flows")
    p.add_argument("--emit", choices=("json", "csv"), default="json")
    p.add_argument("--out", help="also write solve.json and flow.csv here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("nplayer", help="equilibrium sets of seeded samples")
    _model_args(p)
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--emit", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_nplayer)

    p = sub.add_parser("simulate", help="Monte Carlo experiments")
    p.add_argument("experiment", choices=("histogram", "near", "extremal", "fatou",
                                          "scaling", "track"))
    _model_args(p)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--t", type=float)
    p.add_argument("--grid", type=_floats)
    p.add_argument("--eps", type=float)
    p.add_argument("--x", type=float)
    p.add_argument("--set", dest="set_selector", choices=("K", "K_star"))
    p.add_argument("--delta", type=float)
    p.add_argument("--mode", choices=("all", "minimal", "maximal"))
    p.add_argument("--tol", type=float)
    p.add_argument("--n-ladder", dest="n_ladder", type=_ints)
    p.add_argument("--betas", type=_floats)
    p.add_argument("--flow", dest="flow_kind", choices=("minimal", "maximal"))
    p.add_argument("--threads", type=int, default=default_threads())
    p.add_argument("--out", help="output directory")
    p.add_argument("--stem", help="file name stem (default: experiment name)")
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("asymptotics", help="closed-form limit statistics")
    p.add_argument("action", nargs="?", choices=("curve",))
    p.add_argument("--alpha", type=float)
    p.add_argument("--x", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--alpha-grid", dest="alpha_grid", type=_alpha_grid)
    p.set_defaults(func=cmd_asymptotics)

    p = sub.add_parser("reproduce", help="canonical experiment of a preset")
    p.add_argument("preset")
    p.add_argument("--threads", type=int, default=default_threads())
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MfgStopError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
