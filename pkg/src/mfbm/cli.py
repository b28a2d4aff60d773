"""Command-line entry point: ``mfbm <command> --config file.toml [overrides]``.

Every command writes into ``<output_dir>/<command>/`` and finishes with a
``manifest.json`` listing the config hash, seed, library versions and every
file it wrote.  Exit codes: 0 success, 2 configuration error, 3 numerical
failure.
"""
from __future__ import annotations

import argparse
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .averaging import AveragedDrift, averaging_error_sweep, build_bbar, check_assumptions
from .config import ExperimentConfig, load_config
from .deviations import (TerminalEvent, gaussian_event_rate, gaussian_terminal_moments, mc_rare_event,
                         rate_ldp, rate_mdp, rate_vs_mc)
from .errors import ConfigError, MfbmError, NumericalError
from .noise import sample_cylindrical_fbm, volterra_kernel, volterra_kernel_2f1
from .paths import GridPath
from .solvers import solve_averaged, solve_khasminskii_auxiliary, solve_slow_fast

COMMANDS = ("simulate", "average", "rate", "mdp-rate", "mc-ldp", "check-assumptions", "kernel-selftest")


def _versions() -> dict:
    import scipy
    import statsmodels
    return {"mfbm": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "statsmodels": statsmodels.__version__}


class _Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, cfg: ExperimentConfig | None, command: str, argv, out_dir: Path):
        self.cfg, self.command, self.argv = cfg, command, list(argv)
        self.dir = out_dir / command
        self.dir.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []

    def path(self, name: str) -> Path:
        if name in self.outputs:
            raise RuntimeError(f"output {name} written twice")
        self.outputs.append(name)
        return self.dir / name

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text)
        return p

    def write_json(self, name: str, obj) -> Path:
        return self.write_text(name, json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")

    def manifest(self, status: str, extra: dict | None = None) -> Path:
        cfg = self.cfg
        m = {"command": self.command, "argv": self.argv, "status": status, "versions": _versions(),
             "outputs": list(self.outputs)}
        if cfg is not None:
            m.update({"config_hash": cfg.source_hash, "seed": cfg.seed, "seed_source": cfg.seed_source,
                      "config": cfg.echo()})
        if extra:
            m.update(extra)
        p = self.dir / "manifest.json"
        p.write_text(json.dumps(m, indent=2, sort_keys=True, default=_default) + "\n")
        return p


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


# --------------------------------------------------------------------------
# commands

def cmd_simulate(cfg: ExperimentConfig, run: _Run, args) -> dict:
    coeffs = cfg.coefficients()
    times = cfg.times
    reps = None if cfg.replicas == 1 else cfg.replicas
    bh = sample_cylindrical_fbm(cfg.space, cfg.q1, cfg.H, times, cfg.seed, replicas=reps)
    summary = []
    for i, s in enumerate(cfg.schedule):
        if s.block is not None:
            res, aux = solve_khasminskii_auxiliary(cfg.space, coeffs, s, None, None, bh, None, cfg.x0, cfg.y0,
                                                   q2=cfg.q2, seed=cfg.seed, replicas=reps, divergence="record")
            run.write_text(f"auxiliary_{i}.csv", aux.to_csv_string())
        else:
            res = solve_slow_fast(cfg.space, coeffs, s, bh, None, cfg.x0, cfg.y0, q2=cfg.q2, seed=cfg.seed,
                                  replicas=reps, divergence="record")
        run.write_text(f"paths_{i}.csv", res.to_csv_string())
        run.write_text(f"diagnostics_{i}.json", res.diagnostics_json() + "\n")
        summary.append({"index": i, **s.to_dict(), "abort_fraction": res.diagnostics["abort_fraction"]})
        print(f"cell {i}: eps={s.epsilon:g} delta={s.delta:g} substeps={res.diagnostics['substeps_per_step']} "
              f"aborted={res.diagnostics['abort_fraction']:.3%}")
    return {"cells": summary}


def cmd_average(cfg: ExperimentConfig, run: _Run, args) -> dict:
    coeffs = cfg.coefficients()
    sec = cfg.sections.get("average", {})
    out = {}
    if "x_grid" in sec:
        grid = sec["x_grid"]
        st = {k: sec[k] for k in ("replicas", "burn_in", "horizon", "dt") if k in sec}
        st["seed"] = sec.get("seed", cfg.seed)
        st["q2"] = cfg.q2
        drift = build_bbar(cfg.space, coeffs, grid, st)
        run.write_text("averaged_drift.json", drift.to_json() + "\n")
        print(f"tabulated averaged drift on {drift.table.shape[:-1]} nodes")
    elif coeffs.has_closed_form_bbar:
        drift = AveragedDrift.closed_form(coeffs)
        print("using the closed-form averaged drift")
    else:
        raise ConfigError("[average].x_grid is required for families without a closed-form averaged drift")
    xbar = solve_averaged(cfg.space, drift, cfg.x0, cfg.times)
    run.write_text("averaged_path.csv", xbar.to_csv_string())
    if sec.get("sweep", False):
        rep = averaging_error_sweep(cfg.space, coeffs, cfg.schedule, cfg.replicas, cfg.seed, x0=cfg.x0,
                                    y0=cfg.y0, times=cfg.times, H=cfg.H, q1=cfg.q1, q2=cfg.q2,
                                    bbar=None if drift.mode == "closed_form" else drift)
        run.write_json("sweep.json", rep.to_dict())
        for s, m, e in zip(cfg.schedule, rep.means, rep.ses):
            print(f"eps={s.epsilon:g} delta={s.delta:g}: E sup|X - Xbar| = {m:.6g} +- {e:.2g}")
        print(f"monotone={rep.monotone} valid={rep.valid}")
        out["sweep_valid"] = rep.valid
    return out


def _phi(cfg, args, default: GridPath) -> GridPath:
    src = args.phi or cfg.sections.get("rate", {}).get("phi")
    if src is None:
        print("no --phi given: evaluating the default path")
        return default
    p = Path(src)
    if not p.is_file():
        raise ConfigError(f"path file not found: {p}")
    try:
        return GridPath.from_csv(p)
    except (ValueError, KeyError, IndexError) as exc:
        raise ConfigError(f"cannot read path CSV {p}: {exc}") from None


def _rate_out(run, rep):
    d = rep.to_dict()
    d["recomputed"] = rep.recompute()
    run.write_json("rate.json", d)
    if rep.minimal_control_dot is not None:
        run.write_text("minimal_control.csv", rep.minimal_control.to_csv_string())
        run.write_text("minimal_control_dot.csv", rep.minimal_control_dot.to_csv_string())
    print(f"rate = {rep.rate:.10g}")
    return {"rate": rep.rate}


def cmd_rate(cfg: ExperimentConfig, run: _Run, args) -> dict:
    coeffs = cfg.coefficients()
    xbar = solve_averaged(cfg.space, coeffs, cfg.x0, cfg.times)
    phi = _phi(cfg, args, xbar)
    err = bool(cfg.sections.get("rate", {}).get("error_estimate", True))
    rep = rate_ldp(phi, coeffs, coeffs, cfg.space, cfg.H, cfg.q1, x0=cfg.x0, error_estimate=err)
    return _rate_out(run, rep)


def cmd_mdp_rate(cfg: ExperimentConfig, run: _Run, args) -> dict:
    coeffs = cfg.coefficients()
    xbar = solve_averaged(cfg.space, coeffs, cfg.x0, cfg.times)
    zero = GridPath(xbar.times, np.zeros_like(xbar.values))
    phi = _phi(cfg, args, zero)
    err = bool(cfg.sections.get("rate", {}).get("error_estimate", True))
    phi.check_same_grid(xbar)
    rep = rate_mdp(phi, xbar, coeffs, coeffs, cfg.space, cfg.H, cfg.q1, error_estimate=err)
    return _rate_out(run, rep)


def cmd_mc_ldp(cfg: ExperimentConfig, run: _Run, args) -> dict:
    coeffs = cfg.coefficients()
    sec = dict(cfg.sections.get("event", {}))
    if "kind" not in sec or "a" not in sec:
        raise ConfigError("[event] needs kind and a")
    ref = sec.pop("rate_reference", None)
    reps = sec.pop("replicas", cfg.replicas)
    try:
        event = TerminalEvent(**sec)
    except TypeError as exc:
        raise ConfigError(f"[event]: {exc}") from None
    if ref == "gaussian":
        m, v = gaussian_terminal_moments(cfg.space, coeffs, cfg.x0, cfg.T, cfg.H, cfg.q1)
        if event.kind == "weighted_norm" and event.center is None:
            event.center = m
        ref = gaussian_event_rate(event, m, v)
    elif ref is not None:
        ref = float(ref)
    rep = mc_rare_event(cfg.space, coeffs, cfg.schedule, event, reps, cfg.seed, x0=cfg.x0, y0=cfg.y0,
                        times=cfg.times, H=cfg.H, q1=cfg.q1, q2=cfg.q2, rate_reference=ref)
    out = rep.to_dict()
    if ref is not None and "insufficient tail resolution" not in rep.flags:
        out["verdict"] = rate_vs_mc(rep, ref).to_dict()
        print(f"verdict: {out['verdict']['status']}")
    run.write_json("mc_ldp.json", out)
    run.write_text("mc_ldp.csv", rep.to_csv_string())
    for e, k, est in zip(rep.epsilons, rep.hits, rep.estimates):
        print(f"eps={e:g}: hits={k} -eps log p = {est:.6g}")
    return {"flags": rep.flags}


def cmd_check_assumptions(cfg: ExperimentConfig, run: _Run, args) -> dict:
    coeffs = cfg.coefficients()
    rep = check_assumptions(cfg.space, coeffs, args.samples, rng=cfg.seed)
    run.write_json("assumptions.json", rep.to_dict())
    print(f"eta = {rep.eta:.6g} (needs > 1), kappa = {rep.kappa:.6g} (needs > 0)")
    print(f"A5 {'pass' if rep.a5_pass else 'FAIL'}, A6 {'pass' if rep.a6_pass else 'FAIL'}")
    for f in rep.failing():
        print(f"  failing: {f}")
    return {"a5_pass": rep.a5_pass, "a6_pass": rep.a6_pass}


def kernel_selftest(H: float = 0.7, samples: int = 100, seed: int = 0) -> dict:
    """Integral form of ``K_H`` against its series form, plus the ``H -> 1/2`` limit."""
    gen = np.random.default_rng(seed)
    t = gen.uniform(0.05, 2.0, samples)
    s = t * gen.uniform(0.01, 0.99, samples)
    a = volterra_kernel(H, t, s)
    b = np.array([volterra_kernel_2f1(H, ti, si) for ti, si in zip(t, s)])
    diff = float(np.max(np.abs(a - b)))
    tt = np.linspace(0.2, 2.0, 10)
    lim = max(float(np.max(np.abs(volterra_kernel(0.5 + 1e-9, ti, ti * np.linspace(0.1, 0.9, 9)) - 1)))
              for ti in tt)
    return {"H": H, "samples": samples, "max_abs_diff": diff, "degeneracy_max_dev": lim,
            "pass": bool(diff <= 1e-8 and lim <= 1e-6)}


def cmd_kernel_selftest(cfg, run: _Run, args) -> dict:
    res = kernel_selftest(args.H if args.H is not None else 0.7, args.samples, cfg.seed if cfg else 0)
    run.write_json("kernel_selftest.json", res)
    print(f"integral vs series max |diff| = {res['max_abs_diff']:.3g}; "
          f"H=1/2+1e-9 max |K-1| = {res['degeneracy_max_dev']:.3g}")
    if not res["pass"]:
        raise NumericalError("kernel self-test failed")
    return res


_HANDLERS = {"simulate": cmd_simulate, "average": cmd_average, "rate": cmd_rate, "mdp-rate": cmd_mdp_rate,
             "mc-ldp": cmd_mc_ldp, "check-assumptions": cmd_check_assumptions,
             "kernel-selftest": cmd_kernel_selftest}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfbm", description="Slow-fast SPDEs with fractional noise: "
                                "simulation, averaging and deviation rates.")
    sub = p.add_subparsers(dest="command", metavar="command")
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=name != "kernel-selftest", help="TOML experiment file")
        sp.add_argument("--out", dest="output_dir", help="override output_dir")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--replicas", type=int)
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--delta", type=float)
        sp.add_argument("--block", type=float)
        sp.add_argument("--T", type=float)
        sp.add_argument("--M", type=int)
        sp.add_argument("--H", type=float)
        if name in ("rate", "mdp-rate"):
            sp.add_argument("--phi", help="path CSV (t, mode_0, ...)")
        if name in ("check-assumptions", "kernel-selftest"):
            sp.add_argument("--samples", type=int, default=2000 if name == "check-assumptions" else 100)
    return p


def run_command(argv) -> int:
    argv = list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    run = None
    try:
        overrides = {k: getattr(args, k) for k in ("output_dir", "seed", "replicas", "epsilon", "delta",
                                                    "block", "T", "M", "H")}
        if args.config is None:
            cfg = None
            out_dir = Path(args.output_dir or "mfbm_out")
        else:
            cfg = load_config(args.config, overrides)
            out_dir = cfg.output_dir
        run = _Run(cfg, args.command, argv, out_dir)
        extra = _HANDLERS[args.command](cfg, run, args)
        run.manifest("ok", {"result": extra})
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        if run is not None:
            run.manifest("config_error", {"error": str(exc)})
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        if run is not None:
            run.manifest("numerical_error", {"error": str(exc)})
        return 3
    except MfbmError as exc:  # pragma: no cover
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))
