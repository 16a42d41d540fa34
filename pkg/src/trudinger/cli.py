"""Batch command line: ``verify``, ``solve``, ``converge`` and ``suite``.

Exit codes: 0 all checks pass, 1 a check failed, 2 invalid input,
3 the solver diverged.
"""
from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import run_all
from .barriers import make_barrier
from .calculus import Exponents
from .errors import DivergenceError, InvalidInputError, TrudingerError
from .expr import parse_expression
from .problem import BoundaryDatum, CylinderProblem, domain_from_dict
from .solver import (Grid, SolveConfig, constant_solution, convergence_study, heat_solution,
                     max_principle_report, plane_wave, solve, write_manifest, write_orders_csv,
                     write_snapshots_csv)
from .verifier import _clean, sweep

log = logging.getLogger("trudinger")

EXIT_PASS, EXIT_FAIL, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2, 3


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _require(d, key, where):
    if key not in d:
        raise InvalidInputError(f"missing field {key!r} in {where}")
    return d[key]


def build_problem(section: dict) -> CylinderProblem:
    """CylinderProblem from the ``problem`` section of a config."""
    p = float(_require(section, "p", "problem"))
    n = int(_require(section, "n", "problem"))
    T = float(_require(section, "T", "problem"))
    e = Exponents(p, n)
    domain = domain_from_dict(_require(section, "domain", "problem"))
    data = _require(section, "datum", "problem")
    bounds = data.get("bounds")
    if "h" in data:
        h = parse_expression(data["h"], n)
        datum = BoundaryDatum.from_space_time(lambda x, t: h(x, t), tuple(bounds) if bounds else None)
    else:
        f = parse_expression(_require(data, "f", "problem.datum"), n)
        g = parse_expression(_require(data, "g", "problem.datum"), n)
        datum = BoundaryDatum(lambda x: f(x, 0.0), lambda x, t: g(x, t), tuple(bounds) if bounds else None)
    return CylinderProblem(domain, T, e, datum, n_samples=int(section.get("n_samples", 100_000)),
                           seed=int(section.get("seed", 0)))


def build_solve_config(section: dict, end_time=None) -> SolveConfig:
    return SolveConfig(safety=float(section.get("safety", 0.4)), G=section.get("G"),
                       end_time=section.get("end_time", end_time),
                       n_snapshots=int(section.get("n_snapshots", 10)),
                       snapshot_times=tuple(section.get("snapshot_times", ())))


def _result(name, passed, metrics):
    return {"name": name, "pass": bool(passed), "metrics": _clean(metrics)}


def cmd_verify(cfg: dict, out: Path, seed: int):
    prob = build_problem(_require(cfg, "problem", "config"))
    opts = cfg.get("verify", {})
    results = []
    records = []
    for i, req in enumerate(_require(cfg, "barriers", "config")):
        anchor = _require(req, "anchor", "barrier request")
        fam = _require(req, "family", "barrier request")
        b = make_barrier(prob, fam, np.asarray(anchor["x"], dtype=float), float(anchor.get("t", 0.0)),
                         float(_require(req, "eps", "barrier request")))
        rep = sweep(b, prob, n_per_piece=int(opts.get("n_per_piece", 10_000)),
                    n_boundary=int(opts.get("n_boundary", 10_000)), seed=seed)
        records.append(b.to_dict())
        results.append(_result(f"{fam}[{i}]", rep.passed, rep.to_dict()))
    (out / "barriers.json").write_text(json.dumps(_clean(records), indent=2, sort_keys=True))
    return results


def cmd_solve(cfg: dict, out: Path, seed: int):
    prob = build_problem(_require(cfg, "problem", "config"))
    section = cfg.get("solver", {})
    grid = Grid.from_spacing(prob.domain, float(_require(section, "h", "solver")), section.get("layout", "vertex"))
    scfg = build_solve_config(section)
    traj = solve(prob, grid, scfg)
    write_snapshots_csv(traj, out / "snapshots.csv")
    write_manifest(traj, scfg, out / "solve_manifest.json")
    mp = max_principle_report(traj)
    tol = float(section.get("max_principle_tol", 1e-3 * max(1.0, mp["M"])))
    u = np.exp(traj.final.active_values())
    return [_result("solve", bool(np.all(u > 0)), {"steps": traj.stats["steps"], "t_final": traj.final.t,
                                                   "u_min": float(u.min()), "u_max": float(u.max())}),
            _result("max_principle", mp["excess"] <= tol, {**mp, "tol": tol})]


def exact_from_section(section: dict):
    kind = _require(section, "solution", "converge")
    if kind == "heat":
        return heat_solution()
    if kind == "plane_wave":
        return plane_wave(np.asarray(_require(section, "a", "converge"), dtype=float), float(_require(section, "p", "converge")))
    if kind == "constant":
        return constant_solution(float(section.get("c", 1.0)), float(_require(section, "p", "converge")))
    raise InvalidInputError(f"unknown exact solution {kind!r}")


def cmd_converge(cfg: dict, out: Path, seed: int):
    section = _require(cfg, "converge", "config")
    exact = exact_from_section(section)
    domain = domain_from_dict(_require(section, "domain", "converge"))
    T = float(_require(section, "T", "converge"))
    if not T > 0:
        raise InvalidInputError("T must be positive")
    study = convergence_study(exact, domain, T, [int(c) for c in _require(section, "cells", "converge")],
                              layout=section.get("layout", "vertex"),
                              cfg=build_solve_config(section, None))
    write_orders_csv(study, out / "orders.csv")
    rows = [{k: v for k, v in r.items() if k != "max_principle"} for r in study["rows"]]
    errors = [r["error"] for r in rows]
    exact_floor = float(section.get("exact_floor", 1e-12))
    decreasing = all(b < a or a <= exact_floor for a, b in zip(errors, errors[1:]))
    orders = [r["order"] for r in rows if r["order"] is not None]
    min_order = section.get("min_order")
    order_ok = min_order is None or all(o >= float(min_order) for o in orders)
    return [_result("convergence", decreasing and order_ok, {"rows": rows, "min_order": min_order})]


def cmd_suite(out: Path):
    return [r.to_dict() for r in run_all()]


COMMANDS = {"verify": cmd_verify, "solve": cmd_solve, "converge": cmd_converge}


def build_parser():
    ap = argparse.ArgumentParser(prog="trudinger", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", required=True, type=Path)
    sp = sub.add_parser("suite")
    sp.add_argument("--out", required=True, type=Path)
    return ap


def _write_report(out: Path, report: dict):
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(_clean(report), indent=2, sort_keys=True))
    stamp = {"timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(), "version": __version__}
    (out / "run.json").write_text(json.dumps(stamp, indent=2))


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    out = args.out
    cfg, seed = {}, 0
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "suite":
            results = cmd_suite(out)
        else:
            try:
                cfg = json.loads(args.config.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise InvalidInputError(f"cannot read config: {exc}") from exc
            if not isinstance(cfg, dict):
                raise InvalidInputError("config must be a JSON object")
            seed = int(cfg.get("seed", 0))
            results = COMMANDS[args.command](cfg, out, seed)
    except DivergenceError as exc:
        return _fail(args.command, cfg, seed, out, exc, EXIT_DIVERGED)
    except (InvalidInputError, ValueError, KeyError, TypeError) as exc:
        return _fail(args.command, cfg, seed, out, exc, EXIT_INVALID)
    except TrudingerError as exc:
        return _fail(args.command, cfg, seed, out, exc, EXIT_INVALID)
    failures = [r["name"] for r in results if not r["pass"]]
    _write_report(out, {"command": args.command, "config_hash": config_hash(cfg), "seed": seed,
                        "results": results, "failures": failures})
    for r in results:
        log.info("%s %s", "PASS" if r["pass"] else "FAIL", r["name"])
    return EXIT_PASS if not failures else EXIT_FAIL


def _fail(command, cfg, seed, out: Path, exc: Exception, code: int) -> int:
    err = {"error": type(exc).__name__, "message": str(exc)}
    if getattr(exc, "step", None) is not None:
        err["step"] = exc.step
    report = {"command": command, "config_hash": config_hash(cfg), "seed": seed, "results": [],
              "failures": [err]}
    try:
        _write_report(out, report)
        (out / "error.json").write_text(json.dumps(_clean(err), indent=2, sort_keys=True))
    except OSError:
        pass
    print(json.dumps(err), file=sys.stderr)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
