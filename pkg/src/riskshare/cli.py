"""Command line: ``riskshare <command> --scenario FILE --out DIR [options]``.

Exit codes: 0 on success, 2 when the compatibility precheck fails (results
are still computed and written), 1 on any error.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import report as rp
from .capital import eta_global
from .comonotone import improve_allocation
from .diagnostics import compatible_probes, is_admissible, probe_densities
from .errors import RiskShareError, ValidationError
from .scenario import parse_scenario, with_overrides
from .sharing import (
    SharingProblem,
    brute_force_oracle,
    exactness_probe,
    precheck,
    solve,
)

COMMANDS = ("solve", "improve", "diagnose", "capital", "probe", "oracle")


def _certificates(agents, Z):
    if Z is None:
        return [math.inf] * len(agents)
    return [float(rho.conjugate_value(Z)) for rho in agents]


def _write_diagnostics(out, names, check):
    ids, norms = [], []
    for i in range(len(names)):
        ids.append(check.density_ids.get(i, "none"))
        rep = check.reports.get(i)
        norms.append(rep.witness_norm if rep is not None else 0.0)
    rp.write_diagnostics(out, names, check.admissible, ids, norms)


def _precheck_section(rep, check):
    rep.section("precheck")
    rep.item("passed", check.passed)
    rep.item("admissible", [bool(a) for a in check.admissible])
    rep.item("failing agents", [i + 1 for i in check.failing])
    if check.witness is not None:
        rep.item("witness agent", check.witness_agent + 1)
        rep.item("witness", check.witness)


def _solution_section(rep, names, sol):
    rep.section("solution")
    rep.item("method", sol.method)
    rep.item("total risk", sol.total_risk)
    for name, r in zip(names, sol.per_agent_risk):
        rep.item(f"risk {name}", r)
    rep.item("duality bound", sol.certificate_bound)
    rep.item("box", sol.box)


def _cmd_solve(sc, out, rep):
    problem = SharingProblem(sc.space, sc.agents, sc.target)
    check = precheck(problem, sc.options["tolerance"])
    sol = solve(problem, sc.solver_options(), check)
    _precheck_section(rep, check)
    _solution_section(rep, sc.agent_names, sol)
    rp.write_allocation(out, sc.space.atoms, sc.target, sol.allocation)
    rp.write_risks(out, sc.agent_names, sol.per_agent_risk, _certificates(sc.agents, sol.certificate))
    _write_diagnostics(out, sc.agent_names, check)
    return check


def _cmd_improve(sc, out, rep):
    if sc.allocation is None:
        raise ValidationError("improve needs an 'allocation' in the scenario")
    problem = SharingProblem(sc.space, sc.agents, sc.target)
    check = precheck(problem, sc.options["tolerance"])
    res = improve_allocation(sc.target, sc.allocation, sc.space, problem.beliefs, sc.options["tolerance"])
    before = [float(r.value(y)) for r, y in zip(sc.agents, sc.allocation)]
    after = [float(r.value(y)) for r, y in zip(sc.agents, res.realized)]
    _precheck_section(rep, check)
    rep.section("improvement")
    for name, b, a in zip(sc.agent_names, before, after):
        rep.item(f"risk {name} before", b)
        rep.item(f"risk {name} after", a)
    rep.item("total before", sum(before))
    rep.item("total after", sum(after))
    rp.write_allocation(out, sc.space.atoms, sc.target, res.realized)
    rp.write_risks(out, sc.agent_names, after, _certificates(sc.agents, check.certificate()))
    _write_diagnostics(out, sc.agent_names, check)
    return check


def _cmd_diagnose(sc, out, rep):
    problem = SharingProblem(sc.space, sc.agents, sc.target)
    tol = sc.options["tolerance"]
    check = precheck(problem, tol)
    _precheck_section(rep, check)
    dens = probe_densities(sc.space, sc.options["probes"], sc.options["seed"])
    for name, rho in zip(sc.agent_names, sc.agents):
        adm = is_admissible(rho, tol, seed=sc.options["seed"])
        rep.section(f"agent {name}")
        rep.item("measure", rho.describe())
        rep.item("admissible", adm.admissible)
        if adm.compatibility is not None:
            rep.item("belief density compatible", adm.compatibility.compatible)
        try:
            hits = compatible_probes(rho, dens, tol)
        except RiskShareError as err:
            rep.item("compatible probes", f"unavailable ({err})")
            continue
        rep.item("probe densities", len(dens))
        rep.item("compatible probes", len(hits))
        if hits == [0]:
            rep.item("compatible set", "{constant}")
        elif hits:
            rep.item("compatible set", "{" + ", ".join("constant" if k == 0 else f"probe{k}" for k in hits) + "}")
        else:
            rep.item("compatible set", "{}")
    _write_diagnostics(out, sc.agent_names, check)
    return check


def _cmd_capital(sc, out, rep):
    if sc.regimes is None:
        raise ValidationError("capital needs a 'securities' section")
    problem = SharingProblem(sc.space, sc.agents, sc.target)
    check = precheck(problem, sc.options["tolerance"])
    res = eta_global(sc.regimes, sc.target, units=sc.units, box=sc.options["box"], options=sc.solver_options())
    _precheck_section(rep, check)
    rep.section("capital")
    rep.item("eta", res.eta)
    rep.item("method", res.method)
    rep.item("sum of eta_i", sum(res.per_agent_eta))
    rep.item("kernel price", res.kernel_price)
    rep.item("pricing density source", res.assumption.source)
    for name, e, a in zip(sc.agent_names, res.per_agent_eta, res.acceptance_values(sc.regimes)):
        rep.item(f"eta {name}", e)
        rep.item(f"acceptance value {name}", a)
    rp.write_allocation(out, sc.space.atoms, sc.target, res.allocation)
    rp.write_risks(out, sc.agent_names, res.per_agent_eta, _certificates(sc.agents, res.pricing_density))
    _write_diagnostics(out, sc.agent_names, check)
    return check


def _cmd_probe(sc, out, rep):
    problem = SharingProblem(sc.space, sc.agents, sc.target)
    check = precheck(problem, sc.options["tolerance"])
    opts = sc.solver_options()
    ev = exactness_probe(problem, box_schedule=tuple(sc.options["box_schedule"]), options=opts)
    sol = solve(problem, opts, check)
    _precheck_section(rep, check)
    rep.section("exactness probe")
    rep.item("boxes", ev.boxes)
    rep.item("minima", ev.minima)
    rep.item("minimizer norms", ev.norms)
    rep.item("saturated", [bool(s) for s in ev.saturated])
    rep.item("strictly decreasing", ev.strictly_decreasing)
    rep.item("non-attainment evidence", ev.non_attainment)
    _solution_section(rep, sc.agent_names, sol)
    rp.write_allocation(out, sc.space.atoms, sc.target, sol.allocation)
    rp.write_risks(out, sc.agent_names, sol.per_agent_risk, _certificates(sc.agents, sol.certificate))
    _write_diagnostics(out, sc.agent_names, check)
    return check


def _cmd_oracle(sc, out, rep):
    problem = SharingProblem(sc.space, sc.agents, sc.target)
    check = precheck(problem, sc.options["tolerance"])
    orc = brute_force_oracle(problem, grid=sc.options["grid"], box=sc.options["box"])
    sol = solve(problem, sc.solver_options(), check)
    _precheck_section(rep, check)
    rep.section("oracle")
    rep.item("grid", sc.options["grid"])
    rep.item("oracle total", orc.total_risk)
    rep.item("solver total", sol.total_risk)
    rep.item("difference", orc.total_risk - sol.total_risk)
    rp.write_allocation(out, sc.space.atoms, sc.target, orc.allocation)
    rp.write_risks(out, sc.agent_names, orc.per_agent_risk, _certificates(sc.agents, sol.certificate))
    _write_diagnostics(out, sc.agent_names, check)
    return check


HANDLERS = {
    "solve": _cmd_solve,
    "improve": _cmd_improve,
    "diagnose": _cmd_diagnose,
    "capital": _cmd_capital,
    "probe": _cmd_probe,
    "oracle": _cmd_oracle,
}


def run(command: str, scenario, out_dir) -> int:
    """Execute one command and write its artifacts; returns the exit code."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = rp.Report(command)
    try:
        check = HANDLERS[command](scenario, out, rep)
    except (RiskShareError, ValueError) as err:
        rep.section("error")
        rep.item("type", type(err).__name__)
        rep.item("invariant", getattr(err, "invariant", "none"))
        rep.item("message", str(err))
        rep.write(out)
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    rep.write(out)
    return 0 if check.passed else 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="riskshare", description="Risk sharing under heterogeneous beliefs.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--scenario", required=True, help="scenario JSON file")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--tolerance", type=float, default=None)
    ap.add_argument("--box", type=float, default=None, help="intercept / coordinate box M")
    ap.add_argument("--grid", type=float, default=None, help="oracle grid step h")
    ap.add_argument("--seed", type=int, default=None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = parse_scenario(args.scenario)
        sc = with_overrides(sc, tolerance=args.tolerance, box=args.box, grid=args.grid, seed=args.seed)
    except (RiskShareError, ValueError, OSError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    return run(args.command, sc, args.out)


if __name__ == "__main__":
    sys.exit(main())
