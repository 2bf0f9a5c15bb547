"""``et`` command-line front end.

    et solve   --config PATH [--out PATH] [--depth K] [--seed S]
    et dual    --config PATH ...
    et zeta    --config PATH [--workers N] ...
    et certify --config PATH
    et eo      --config PATH

Reports are JSON written to ``--out`` (or ``outputs.report``, or stdout).
Floats are written with ``repr`` so every value round-trips exactly.
Exit codes: 0 success, 1 configuration error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend
from .config import Config, load_config
from .errors import ConfigError, ErgoTransportError, NonConvergence, PositivityError
from .lp import TransportPlan, lp_solve, optimal_face_probe, perturb_problem
from .shift import Cylinder, Point
from .transport import (
    DualPair, P1Instance, P2Instance, ValueBracket, _build, admissibility_violation,
    certify_slackness, dual_from_lp, eo_min, lax_oleinik_refine, lipschitz_excess, solve_p1,
    solve_p2,
)
from .zeta import zeta_sweep

COMMAND_PROBLEMS = {
    "solve": ("p1", "p2"),
    "dual": ("p1", "p2"),
    "zeta": ("zeta-p1", "zeta-p2"),
    "certify": ("certify",),
    "eo": ("eo",),
}
PLAN_COLUMNS = ("x", "y", "mass")


def _instance(cfg: Config, cost=None):
    cost = cfg.cost if cost is None else cost
    if cfg.mode == "p1":
        return P1Instance(cfg.mu, cost, cfg.depth, cfg.lam, cfg.d)
    return P2Instance(cost, cfg.kx, cfg.ky, cfg.lam, cfg.d)


def plan_rows(plan: TransportPlan) -> list:
    return [[str(u), str(v), float(m)] for u, v, m in plan.atoms]


def plan_csv(plan: TransportPlan) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLAN_COLUMNS)
    for u, v, m in plan_rows(plan):
        w.writerow([u, v, repr(m)])
    return buf.getvalue()


def _certificate_dict(cert) -> dict:
    return {"status": cert.status, "duality_gap": cert.duality_gap,
            "max_admissibility_violation": cert.max_admissibility_violation,
            "max_support_slack": cert.max_support_slack,
            "dual_objective": cert.dual_objective, "plan_value": cert.plan_value}


def _solve(cfg: Config, seed: int):
    inst = _instance(cfg)
    if cfg.perturb_scale > 0:
        # genericity probe: solve the lo LP with noisy costs
        system = _build(inst)
        p = perturb_problem(system.problem("lo"), cfg.perturb_scale, seed)
        system.cost_lo = p.c.reshape(system.cost_lo.shape)
        system.cost_hi = np.maximum(system.cost_hi, system.cost_lo)
        return _solve_system(inst, system, cfg)
    if cfg.max_iter is not None:
        return _solve_system(inst, _build(inst), cfg)
    vb, dp = solve_p1(inst) if cfg.mode == "p1" else solve_p2(inst)
    return vb, dp


def _solve_system(inst, system, cfg):
    s_lo = lp_solve(system.problem("lo"), max_iter=cfg.max_iter)
    s_hi = lp_solve(system.problem("hi"), warm=s_lo, max_iter=cfg.max_iter)
    if not (s_lo.optimal and s_hi.optimal):
        raise NonConvergence(f"LP ended {s_lo.status}/{s_hi.status}")
    plan_lo = system.plan_from_vector(s_lo.x, "lo")
    plan_lo.lp = s_lo
    plan_hi = system.plan_from_vector(s_hi.x, "hi")
    plan_hi.lp = s_hi
    vb = ValueBracket(s_lo.value, max(s_hi.value, s_lo.value), plan_lo, plan_hi, system,
                      inst.cost.lipschitz(inst.lam), inst.lam)
    return vb, dual_from_lp(s_lo, system)


def _bracket_dict(vb) -> dict:
    return {"lo": vb.lo, "hi": vb.hi, "width": vb.width, "width_bound": vb.width_bound(),
            "lipschitz": vb.lipschitz}


def cmd_solve(cfg: Config, args) -> dict:
    vb, dp = _solve(cfg, args.seed)
    system = vb.system
    cert = certify_slackness(vb.plan_lo, dp, system, cfg.tol)
    probe = optimal_face_probe(system.problem("lo"), vb.plan_lo.lp, cfg.tol)
    path = cfg.output_path("plan_csv")
    if path is not None:
        path.write_text(plan_csv(vb.plan_lo), encoding="utf-8")
    return {
        "bracket": _bracket_dict(vb),
        "plan": plan_rows(vb.plan_lo),
        "plan_hi": plan_rows(vb.plan_hi),
        "dual": dp.as_dict(system),
        "certificate": _certificate_dict(cert),
        "uniqueness": {"unique": probe.unique, "tied_columns": probe.tied_columns,
                       "method": probe.method},
        "diagnostics": {"backend": backend(),
                        "lp_iterations": [vb.plan_lo.lp.iterations, vb.plan_hi.lp.iterations],
                        "lp_residuals": vb.plan_lo.lp.residuals,
                        "lp_shape": list(system.A.shape)},
    }


def cmd_dual(cfg: Config, args) -> dict:
    vb, dp = _solve(cfg, args.seed)
    system = vb.system
    inst = _instance(cfg)
    refined, info = lax_oleinik_refine(inst, dp, system=system)
    L = inst.cost.lipschitz(cfg.lam)
    return {
        "bracket": _bracket_dict(vb),
        "dual": refined.as_dict(system),
        "lp_dual": dp.as_dict(system),
        "dual_objective": refined.objective(system),
        "admissibility_violation": admissibility_violation(refined, system),
        "psi_lipschitz_excess": lipschitz_excess(refined.psi, system.ky - 1, cfg.d, L, cfg.lam),
        "refine": {"iterations": info.iterations, "residual": info.residual},
        "diagnostics": {"backend": backend()},
    }


def cmd_zeta(cfg: Config, args) -> dict:
    z = cfg.zeta
    inst = _instance(cfg)
    table = zeta_sweep(inst, z.betas, z.ns, z.report_depth, z.period_mode,
                       workers=args.workers, with_bracket=z.bracket, cap=cfg.fix_cap)
    path = cfg.output_path("table_csv")
    if path is None:
        path = Path(args.out).with_suffix(".csv") if args.out else Path("zeta_table.csv")
    path.write_text(table.to_csv(), encoding="utf-8")
    rows = []
    for beta, n, value, rx, ry, gap in table.rows:
        row = {"beta": beta, "n": n, "value": value, "res_x": rx, "res_y": ry, "gap": gap}
        if z.flip_shift is not None:
            row["value_original_scale"] = z.flip_shift - value
        rows.append(row)
    lo, hi = table.bracket
    return {
        "table": rows,
        "table_csv": str(path),
        "max_bracket": None if not z.bracket else {"lo": lo, "hi": hi},
        "flip": None if z.flip_shift is None else {"shift": z.flip_shift, "scale": -1.0},
        "diagnostics": {"backend": backend(), "workers": args.workers},
    }


def _parse_cell(text: str, d: int):
    if text.startswith("[") and text.endswith("]"):
        return Cylinder.parse(text[1:-1], d)
    if "|" in text:
        return Point.parse(text, d)
    return text


def cmd_certify(cfg: Config, args) -> dict:
    try:
        stored = json.loads(cfg.certify_input.read_text(encoding="utf-8"))
        rows, dual = stored["plan"], stored["dual"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read a solve report: {exc}", "certify.input") from None
    system = _build(_instance(cfg))
    try:
        atoms = [(_parse_cell(u, cfg.d), _parse_cell(v, cfg.d), float(m)) for u, v, m in rows]
        plan = TransportPlan(atoms, float("nan"))
        dp = DualPair.from_dict(dual, system)
        cert = certify_slackness(plan, dp, system, cfg.tol)
    except ValueError as exc:
        raise ConfigError(f"stored plan/dual does not match the system: {exc}", "certify.input") from None
    return {"certificate": _certificate_dict(cert)}


def cmd_eo(cfg: Config, args) -> dict:
    value, orbit = eo_min(cfg.cost, cfg.eo_n_max, x=cfg.eo_x, lam=cfg.lam, cap=cfg.fix_cap)
    return {"eo": {"value": value, "orbit": str(orbit.primitive_word), "period": orbit.period,
                   "n_max": cfg.eo_n_max}}


COMMANDS = {"solve": cmd_solve, "dual": cmd_dual, "zeta": cmd_zeta, "certify": cmd_certify, "eo": cmd_eo}


def run(cfg: Config, command: str, args=None):
    """Dispatch one command; returns (report dict, exit code)."""
    if args is None:
        args = argparse.Namespace(seed=0, workers=1, out=None)
    if cfg.problem not in COMMAND_PROBLEMS[command]:
        raise ConfigError(f"'et {command}' expects problem in {COMMAND_PROBLEMS[command]}, "
                          f"got {cfg.problem!r}", "problem")
    t0 = time.perf_counter()
    body = COMMANDS[command](cfg, args)
    report = {"command": command, "version": __version__, "config": cfg.echo(), **body}
    if cfg.timings:
        report["timings"] = {"total_s": time.perf_counter() - t0}
    return report, 0


def dump_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=False, allow_nan=True) + "\n"


def _status_line(command, report) -> str:
    if "certificate" in report:
        c = report["certificate"]
        return (f"certificate: {c['status']} gap={c['duality_gap']!r} "
                f"violation={c['max_admissibility_violation']!r} slack={c['max_support_slack']!r}")
    if command == "zeta":
        return f"zeta table: {report['table_csv']}"
    if command == "eo":
        return f"eo: value={report['eo']['value']!r} orbit={report['eo']['orbit']}"
    return f"{command}: done"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="et", description="Ergodic transport on Bernoulli shifts.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", help="report path (default: outputs.report or stdout)")
        p.add_argument("--depth", type=int, help="override the cylinder depth")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                       help="threads for zeta orbit solves")
        p.add_argument("--seed", type=int, default=0, help="seed for perturbation runs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = None
    if args.depth is not None:
        overrides = {"depth": args.depth, "kx": args.depth, "ky": args.depth}
    try:
        cfg = load_config(args.config, overrides)
        report, code = run(cfg, args.command, args)
    except (ConfigError, PositivityError) as exc:
        print(f"et: config error: {exc}", file=sys.stderr)
        return 1
    except ErgoTransportError as exc:
        print(f"et: solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    text = dump_report(report)
    out = args.out or (str(cfg.output_path("report")) if cfg.output_path("report") else None)
    if out:
        Path(out).write_text(text, encoding="utf-8")
        print(f"report: {out}")
    else:
        sys.stdout.write(text)
    print(_status_line(args.command, report), file=sys.stderr if not out else sys.stdout)
    return code


if __name__ == "__main__":
    sys.exit(main())
