"""Command-line interface: ``hele-shaw simulate | verify | gallery | oracle``."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, HeleShawError, SimulationError, UnknownEntry

OUT_ENV = "HELE_SHAW_OUT"

EXIT_OK, EXIT_ERROR, EXIT_EVENT = 0, 1, 2

CSV_HELP = """\
trajectory.csv columns (one row per sample, every column in every row):
  t                     sample time
  a1                    a_1 = f'(0), real positive
  b_re, b_im            scale factor b of g = b prod(z - w_k) / prod(z - p_j)^n_j
  om{k}_re, om{k}_im    zeros w_1..w_m of g
  ze{j}_re, ze{j}_im    poles of g, repeated according to multiplicity
  M{k}_re, M{k}_im      harmonic moments M_0..M_m
  N0                    M_0 - a_1^2 (sum of j |a_j|^2 over j >= 2 for polynomials)
  constraint_residual   |Im a_1| / |a_1| removed by the last rephasing
  Q                     accumulated source, integral of q dt

events.jsonl: one JSON object per event with keys kind, time, payload.
oracle.csv: t, Q, then a{k}_re, a{k}_im for the Taylor coefficients a_1..a_N.

The default output directory is $%s (or ./out when unset).
""" % OUT_ENV


def _out_dir(arg: str | None, cfg_dir: str | None = None) -> Path:
    path = Path(arg or cfg_dir or os.environ.get(OUT_ENV) or "out")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _load_config(path: str):
    from .dynamics import RunConfig
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return RunConfig.from_dict(data)


def _summary(traj) -> dict:
    from .dynamics import conservation_residual
    from .rational_map import map_to_spec
    out = {"status": traj.status, "message": traj.message, "samples": len(traj.samples),
           "events": [{"kind": e.kind, "time": e.time} for e in traj.events]}
    if traj.samples:
        last = traj.samples[-1]
        out["final"] = {"t": last.state.t, "a1": float(last.series.a1.real), "Q": last.state.Q,
                        "map": map_to_spec(last.state.rd)}
        M = np.array([s.moments.M for s in traj.samples])
        if M.shape[1] > 1:
            out["moment_drift"] = float(np.abs(M[:, 1:] - M[0, 1:]).max())
        bal = M[:, 0].real - M[0, 0].real - 2 * traj.Q
        out["mass_balance"] = float(np.abs(bal).max())
        try:
            cons = conservation_residual(traj)
            out["conservation_residual"] = cons.max_residual
            out["argument_residual"] = cons.max_arg_residual
        except (ValueError, HeleShawError):
            pass
    return out


def _write_run(out: Path, traj, extra: dict | None = None) -> None:
    if traj.samples:
        (out / "trajectory.csv").write_text(traj.to_csv())
    (out / "events.jsonl").write_text(traj.events_jsonl())
    summary = _summary(traj)
    if extra:
        summary.update(extra)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n")


def cmd_simulate(args) -> int:
    from .dynamics import run_simulation
    from .oracle import cross_validate, run_oracle_config, states_to_csv
    try:
        cfg = _load_config(args.config)
    except ConfigError as exc:
        _err(f"invalid config: {exc}")
        return EXIT_ERROR
    out = _out_dir(args.out, cfg.out_dir)
    extra = {}
    traj = None
    try:
        if cfg.engine in ("roots", "both"):
            traj = run_simulation(cfg)
        if cfg.engine in ("spectral", "both"):
            states = run_oracle_config(cfg)
            (out / "oracle.csv").write_text(states_to_csv(states))
            if traj is not None:
                rep = cross_validate(traj, states)
                (out / "cross.json").write_text(rep.to_json() + "\n")
                extra["cross_passed"] = rep.passed
    except SimulationError as exc:
        _write_run(out, exc.trajectory)
        _err(str(exc))
        return EXIT_ERROR
    except HeleShawError as exc:
        _err(str(exc))
        return EXIT_ERROR
    if traj is None:
        print(json.dumps({"status": "completed", "engine": "spectral", "out": str(out)}))
        return EXIT_OK
    _write_run(out, traj, extra)
    print(json.dumps({"status": traj.status, "samples": len(traj.samples),
                      "events": len(traj.events), "out": str(out)}))
    return EXIT_EVENT if traj.status == "event" else EXIT_OK


def cmd_oracle(args) -> int:
    from .oracle import run_oracle_config, states_to_csv
    try:
        cfg = _load_config(args.config)
        out = _out_dir(args.out, cfg.out_dir)
        states = run_oracle_config(cfg)
    except HeleShawError as exc:
        _err(str(exc))
        return EXIT_ERROR
    (out / "oracle.csv").write_text(states_to_csv(states))
    print(json.dumps({"status": "completed", "states": len(states), "out": str(out)}))
    return EXIT_OK


def _read_traj(path: str):
    from .dynamics import Trajectory
    return Trajectory.from_csv(Path(path).read_text())


def _emit_report(payload: dict, passed: bool, out: str | None) -> int:
    text = json.dumps(payload, indent=2, sort_keys=True, default=str)
    print(text)
    if out:
        Path(out).write_text(text + "\n")
    return EXIT_OK if passed else EXIT_ERROR


def cmd_verify(args) -> int:
    try:
        if args.target == "identities":
            from .dynamics import identity_residuals
            from .rational_map import random_map
            rng = np.random.default_rng(args.seed)
            bars = {"reflection": 1e-10, "im_P0": 1e-10, "pole_antisymmetry": 1e-10,
                    "two_forms": 1e-9}
            worst = dict.fromkeys(bars, 0.0)
            for _ in range(args.count):
                res = identity_residuals(random_map(rng))
                for k in bars:
                    worst[k] = max(worst[k], res[k])
            checks = {k: {"max_residual": worst[k], "tol": bars[k], "passed": worst[k] <= bars[k]}
                      for k in bars}
            passed = all(c["passed"] for c in checks.values())
            return _emit_report({"target": "identities", "maps": args.count, "seed": args.seed,
                                 "checks": checks, "passed": passed}, passed, args.report)
        if args.target == "moments":
            from .moments import trajectory_moment_report
            rep = trajectory_moment_report(_read_traj(args.inputs[0]), tol=args.tol)
            body = json.loads(rep.to_json())
            body["target"] = "moments"
            return _emit_report(body, rep.passed, args.report)
        if args.target == "asymptotics":
            from .asymptotics import (coefficient_scaling_check, convergence_report,
                                      pole_envelope_check)
            traj = _read_traj(args.inputs[0])
            reports = {}
            if traj.samples[0].state.rd.n == 0:
                reports["convergence"] = convergence_report(traj)
            else:
                reports["poles"] = pole_envelope_check(traj)
            reports["coefficients"] = coefficient_scaling_check(traj)
            body = {k: json.loads(r.to_json()) for k, r in reports.items()}
            passed = all(r.passed for r in reports.values())
            body.update(target="asymptotics", passed=passed)
            return _emit_report(body, passed, args.report)
        if args.target == "cross":
            from .oracle import cross_validate, states_from_csv
            from .rational_map import taylor_coeffs
            from .oracle import SpectralState
            traj = _read_traj(args.inputs[0])
            text = Path(args.inputs[1]).read_text()
            if text.startswith("t,Q,"):
                states = states_from_csv(text)
            else:
                other = _read_traj(args.inputs[1])
                states = [SpectralState(s.state.t, taylor_coeffs(s.state.rd, 32)) for s in other.samples]
            rep = cross_validate(traj, states, coeff_tol=args.tol or 1e-7, zero_tol=args.zero_tol)
            body = json.loads(rep.to_json())
            body["target"] = "cross"
            return _emit_report(body, rep.passed, args.report)
    except (OSError, ValueError, KeyError, IndexError, HeleShawError) as exc:
        _err(f"verify {args.target}: {exc}")
        return EXIT_ERROR
    return EXIT_ERROR


def cmd_gallery(args) -> int:
    from .gallery import emit, get_entry, list_entries
    from .rational_map import map_to_spec, taylor_coeffs, taylor_to_spec
    if args.action == "list":
        for name in list_entries():
            entry = get_entry(name)
            print(f"{name}\t{entry.description}")
        return EXIT_OK
    try:
        rd = emit(args.name, args.t)
    except UnknownEntry as exc:
        _err(f"unknown gallery entry {exc}")
        return EXIT_ERROR
    except HeleShawError as exc:
        _err(str(exc))
        return EXIT_ERROR
    spec = taylor_to_spec(taylor_coeffs(rd, rd.m + 1)) if rd.n == 0 else map_to_spec(rd)
    print(json.dumps(spec))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hele-shaw", description="Root and pole dynamics of Hele-Shaw flows.",
        epilog=CSV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a configuration", epilog=CSV_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    s.add_argument("config", help="JSON run configuration")
    s.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run a verification suite",
                       epilog="exit status is nonzero iff a gated check fails")
    v.add_argument("target", choices=["identities", "moments", "asymptotics", "cross"])
    v.add_argument("inputs", nargs="*", help="trajectory CSV (cross: two files)")
    v.add_argument("--count", type=int, default=100, help="random maps for identities")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--tol", type=float, default=None, help="main tolerance of the check")
    v.add_argument("--zero-tol", type=float, default=1e-6)
    v.add_argument("--report", help="also write the JSON report to this file")
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("gallery", help="closed-form solutions")
    gsub = g.add_subparsers(dest="action", required=True)
    gsub.add_parser("list")
    ge = gsub.add_parser("emit")
    ge.add_argument("name")
    ge.add_argument("--t", type=float, required=True)
    g.set_defaults(func=cmd_gallery)

    o = sub.add_parser("oracle", help="spectral coefficient integrator")
    osub = o.add_subparsers(dest="action", required=True)
    orun = osub.add_parser("run")
    orun.add_argument("config")
    orun.add_argument("--out")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        need = {"moments": 1, "asymptotics": 1, "cross": 2}.get(args.target, 0)
        if len(args.inputs) < need:
            _err(f"verify {args.target} needs {need} input file(s)")
            return EXIT_ERROR
        if args.target == "moments" and args.tol is None:
            args.tol = 1e-8
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
