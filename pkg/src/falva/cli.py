"""Command-line front end.

Exit codes: 0 ok, 1 residual check failed, 2 bad input, 3 solver did not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import control as ctl
from . import core
from . import symexpr as sx
from .core import FalvaProblem
from .problemfile import (
    ProblemFile,
    ProblemFileError,
    load_problem,
    read_trajectory_csv,
    write_table_csv,
    write_trajectory_csv,
)
from .solvers import ConvergenceError, SingularSystemError, cross_validate, solve_direct, solve_indirect
from .specquad import gamma, truncated_rule
from .symexpr import Add, Const, Jet, Mul, Neg, Sub
from .trajectory import Trajectory

__all__ = ["main", "derive_equations", "EXIT_OK", "EXIT_RESIDUAL", "EXIT_INPUT", "EXIT_SOLVER"]

EXIT_OK = 0
EXIT_RESIDUAL = 1
EXIT_INPUT = 2
EXIT_SOLVER = 3

DEFAULT_CHECK_TOL = 1e-6
DEFAULT_IDENTITY_TOL = 1e-9
CONTROL_TOL = 1e-6

log = logging.getLogger("falva")

SOLVER_ERRORS = (ConvergenceError, SingularSystemError, ctl.ControlEliminationError, sx.EvaluationError)


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# derive


def _signed_terms(e, sign=1):
    """Flatten a sum into (sign, term) pairs."""
    if isinstance(e, Add):
        return _signed_terms(e.left, sign) + _signed_terms(e.right, sign)
    if isinstance(e, Sub):
        return _signed_terms(e.left, sign) + _signed_terms(e.right, -sign)
    if isinstance(e, Neg):
        return _signed_terms(e.arg, -sign)
    if isinstance(e, Mul) and isinstance(e.left, Const) and e.left.value < 0:
        return [(-sign, sx.mul(Const(-e.left.value), e.right))]
    if isinstance(e, Const) and e.value < 0:
        return [(-sign, Const(-e.value))]
    return [(sign, e)]


def _coefficient(i: int) -> str:
    num = "*".join(f"({s}-alpha)" for s in range(1, i + 1))
    den = "(t-theta)" if i == 1 else f"(t-theta)^{i}"
    return f"{num}/{den}"


def _term(coef: str, e) -> str:
    if isinstance(e, Mul) and isinstance(e.left, Const):
        return f"{sx.to_string(e.left)}*{coef}*{_factor(e.right)}"
    if isinstance(e, Const):
        return coef if e.value == 1.0 else f"{sx.to_string(e)}*{coef}"
    return f"{coef}*{_factor(e)}"


def _factor(e) -> str:
    text = sx.to_string(e)
    return f"({text})" if isinstance(e, (Add, Sub)) else text


def friction_text(pb: FalvaProblem, s: int = 0) -> str:
    """Friction force of component s with alpha and t kept symbolic."""
    if pb.alpha == 1.0:
        return "0"
    parts = []
    for i, comb in pb.ops.friction_groups:
        for sign, term in _signed_terms(comb[s]):
            if isinstance(term, Const) and term.value == 0.0:
                continue
            parts.append((sign, _term(_coefficient(i), term)))
    if not parts:
        return "0"
    out = ("-" if parts[0][0] < 0 else "") + parts[0][1]
    for sign, text in parts[1:]:
        out += (" - " if sign < 0 else " + ") + text
    return out


def derive_equations(pb: FalvaProblem) -> dict:
    """Euler-Lagrange equations psi^0 = F and the pieces psi^j, F."""
    n, m = pb.state_dim, pb.m
    eqs, psi, force = [], {}, []
    for s in range(n):
        lhs = sx.to_string(pb.ops.psi[0][s])
        rhs = friction_text(pb, s)
        eqs.append(f"{lhs} = {rhs}")
        force.append(rhs)
        for j in range(1, m + 1):
            psi[f"psi{j}[{s}]"] = sx.to_string(pb.ops.psi[j][s])
    return {"equations": eqs, "psi": psi, "friction": force}


def cmd_derive(args, pf: ProblemFile) -> int:
    if pf.kind != "variational":
        raise InputError("derive needs a variational problem file")
    pb = pf.problem
    out = derive_equations(pb)
    print(f"# Euler-Lagrange equations: alpha = {pb.alpha:g}, t = {pb.t:g}, m = {pb.m}")
    for line in out["equations"]:
        print(line)
    print("# where")
    for key, text in out["psi"].items():
        print(f"{key} = {text}")
    for s, text in enumerate(out["friction"]):
        print(f"F[{s}] = {text}")
    _dump(args, "derive.json", {"config": pf.echo(), **out})
    return EXIT_OK


# ---------------------------------------------------------------------------
# check / identities


def _report_source(pf: ProblemFile, path):
    pb = pf.problem
    source = read_trajectory_csv(path, pb)
    limit = pb.margin_point(pf.config.epsilon_rel) + 1e-12 * (pb.t - pb.a)
    if isinstance(source, Jet):
        keep = source.theta <= limit
        if not np.any(keep):
            raise InputError("no CSV rows lie at interior nodes")
        return Jet(source.theta[keep], source.q[..., keep]), None
    if source.state_dim != pb.state_dim:
        raise InputError("CSV columns do not match state_dim")
    nodes = core.interior_nodes(pb, source.a, source.b, pf.grid, pf.config.epsilon_rel)
    return source, nodes


def _identity_tol(args, jet_scale: float) -> float:
    base = args.tol if args.tol is not None and args.command == "identities" else DEFAULT_IDENTITY_TOL
    return base * max(1.0, jet_scale)


def _scale(source, nodes, pb) -> float:
    jet = source if isinstance(source, Jet) else source.jet_at(nodes, pb.jet_order)
    return float(np.max(np.abs(jet.q)))


def cmd_check(args, pf: ProblemFile) -> int:
    if pf.kind != "variational":
        raise InputError("check needs a variational problem file")
    if not args.trajectory:
        raise InputError("check needs --trajectory")
    pb = pf.problem
    source, nodes = _report_source(pf, args.trajectory)
    report = core.residual_report(pb, source, nodes, pf.config.epsilon_rel)
    tol = args.tol if args.tol is not None else DEFAULT_CHECK_TOL
    id_tol = _identity_tol(args, _scale(source, nodes, pb))
    ok = report.norms["sup"] <= tol and report.max_identity_gap <= id_tol
    payload = {
        "config": {**pf.echo(), "tol": tol, "identity_tol": id_tol},
        **report.to_dict(),
        "converged": bool(ok),
        "iterations": 0,
    }
    _emit(args, "check.json", payload)
    return EXIT_OK if ok else EXIT_RESIDUAL


def cmd_identities(args, pf: ProblemFile) -> int:
    if pf.kind != "variational":
        raise InputError("identities needs a variational problem file")
    pb = pf.problem
    if args.trajectory:
        source, nodes = _report_source(pf, args.trajectory)
    else:
        # seeded random degree-10 polynomial; the identities hold on any curve
        rng = np.random.default_rng(0)
        hi = pb.margin_point(pf.config.epsilon_rel)
        coeffs = rng.normal(size=(pb.state_dim, 11)) / 2.0 ** np.arange(11)
        source = Trajectory(coeffs, (pb.a, hi))
        nodes = core.interior_nodes(pb, pb.a, hi, pf.grid, pf.config.epsilon_rel)
    report = core.verify_identities(pb, source, nodes, pf.config.epsilon_rel)
    tol = _identity_tol(args, _scale(source, nodes, pb))
    ok = report.max_identity_gap <= tol
    payload = {
        "config": {**pf.echo(), "identity_tol": tol},
        "nodes": report.nodes.tolist(),
        "identity_gap": report.identity_gap.tolist(),
        "identity_parts": report.to_dict()["identity_parts"],
        "norms": {"identity_sup": report.max_identity_gap},
        "converged": bool(ok),
        "iterations": 0,
    }
    _emit(args, "identities.json", payload)
    return EXIT_OK if ok else EXIT_RESIDUAL


# ---------------------------------------------------------------------------
# solve


def _solve_variational(pf: ProblemFile, pb: FalvaProblem):
    cfg = pf.config
    if pf.method == "direct":
        return solve_direct(pb, cfg), None
    if pf.method == "cross":
        cv = cross_validate(pb, cfg)
        return cv.indirect, cv
    return solve_indirect(pb, cfg), None


def _control_summary(cp, ex: ctl.Extremal, grid: int, epsilon_rel: float) -> dict:
    a, b = ex.interval
    nodes = np.linspace(a, min(b, cp.margin_point(epsilon_rel)), grid)[1:-1]
    gaps = ctl.pontryagin_residuals(cp, ex, nodes)
    sups = {k: float(np.max(np.abs(v))) for k, v in gaps.items()}
    _, explicit = ctl.hamiltonian_rate(cp, ex, nodes)
    sups["energy_rate_gap"] = float(np.max(ctl.energy_rate_gap(cp, ex, nodes)))
    sups["sup_dH_theta"] = float(np.max(np.abs(explicit)))
    return sups


def cmd_solve(args, pf: ProblemFile) -> int:
    out = _out_dir(args)
    pb = pf.problem
    if pf.kind == "control":
        ex = ctl.solve_shooting(pb, pf.target, pf.config)
        sups = _control_summary(pb, ex, pf.grid, pf.config.epsilon_rel)
        grid = np.linspace(ex.interval[0], ex.interval[1], pf.grid)
        header, table = ctl.extremal_table(pb, ex, grid)
        write_table_csv(out / "extremal.csv", header, table)
        ok = max(sups[k] for k in ("adjoint_gap", "stationarity_gap", "dynamics_gap", "energy_rate_gap")) <= CONTROL_TOL
        payload = {
            "config": pf.echo(),
            "p_a": np.asarray(ex.info["p_a"]).tolist(),
            "miss": ex.info["miss"],
            "norms": sups,
            "converged": bool(ok),
            "iterations": ex.info["iterations"],
        }
        _write_json(out / "result.json", payload)
        print(json.dumps({k: payload[k] for k in ("p_a", "norms", "converged", "iterations")}))
        return EXIT_OK if ok else EXIT_RESIDUAL

    result, cv = _solve_variational(pf, pb)
    tr = result.trajectory
    grid = np.linspace(tr.a, tr.b, pf.grid)
    write_trajectory_csv(out / "trajectory.csv", tr, grid, pb.jet_order)
    payload = {**result.to_dict(), "config": pf.echo()}
    if cv is not None:
        payload["cross_validation"] = cv.to_dict()
    _write_json(out / "result.json", payload)
    _write_json(out / "report.json", {"config": pf.echo(), **result.residual_report.to_dict(),
                                      "converged": bool(result.converged), "iterations": result.iterations})
    summary = {
        "converged": bool(result.converged),
        "iterations": result.iterations,
        "action": result.action_value,
        "norms": result.residual_report.norms,
        "out": str(out),
    }
    print(json.dumps(summary))
    if not result.converged:
        return EXIT_SOLVER
    if cv is not None and not cv.agree:
        return EXIT_RESIDUAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def _parse_alphas(text: str | None) -> list[float]:
    if text is None:
        raise InputError("sweep needs --alpha-list")
    try:
        alphas = [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"--alpha-list: {exc}") from exc
    if not alphas:
        raise InputError("--alpha-list is empty")
    bad = [a for a in alphas if not 0.0 < a <= 1.0]
    if bad:
        raise InputError(f"alpha values must lie in (0, 1]: {bad}")
    return alphas


def _sweep_row(pf: ProblemFile, alpha: float) -> dict:
    pb = pf.problem.replace(alpha=alpha) if pf.kind == "variational" else None
    if pf.kind == "variational":
        result, _ = _solve_variational(pf, pb)
        tr = result.trajectory
        nodes = core.interior_nodes(pb, tr.a, tr.b, pf.grid, pf.config.epsilon_rel)
        it = ctl.induced_tuple(pb, tr, nodes)
        parts = ctl.hamiltonian_values(it["cp"], nodes, it["q"], it["u"], it["p"])
        return {
            "action": result.action_value,
            "endpoint": tr(tr.b).tolist(),
            "sup_dH_theta": float(np.max(np.abs(parts["dH_theta"]))),
            "converged": bool(result.converged),
        }
    src = pf.problem
    cp = ctl.ControlProblem(alpha, src.a, src.t, src.state_dim, src.control_dim, src.lagrangian,
                            src.velocity, src.q_a)
    ex = ctl.solve_shooting(cp, pf.target, pf.config)
    sups = _control_summary(cp, ex, pf.grid, pf.config.epsilon_rel)
    a, b = ex.interval
    rule = truncated_rule(alpha, a, cp.t, b, 64)
    q, u = ex.q(rule.nodes), ex.u(rule.nodes)
    vals = sx.compile_expr([cp.lagrangian])(Jet(rule.nodes, q[:, None, :], u, None))[0]
    action = float(np.dot(rule.weights, np.broadcast_to(vals, rule.nodes.shape))) / gamma(alpha)
    return {
        "action": action,
        "endpoint": ex.q(b).tolist(),
        "sup_dH_theta": sups["sup_dH_theta"],
        "converged": sups["energy_rate_gap"] <= CONTROL_TOL,
    }


def cmd_sweep(args, pf: ProblemFile) -> int:
    alphas = _parse_alphas(args.alpha_list)
    rows = []
    for alpha in alphas:
        row = {"alpha": alpha}
        try:
            row.update(_sweep_row(pf, alpha))
            row["error"] = ""
        except SOLVER_ERRORS + (ValueError,) as exc:
            log.warning("alpha=%g failed: %s", alpha, exc)
            row.update(action=float("nan"), endpoint=[float("nan")] * pf.problem.state_dim,
                       sup_dH_theta=float("nan"), converged=False, error=str(exc))
        rows.append(row)
    n = pf.problem.state_dim
    ends = ["endpoint"] if n == 1 else [f"endpoint{s}" for s in range(n)]
    header = ["alpha", "action", *ends, "sup_dH_theta", "converged", "error"]
    lines = [",".join(header)]
    for r in rows:
        cells = [repr(r["alpha"]), repr(r["action"]), *(repr(float(v)) for v in r["endpoint"]),
                 repr(r["sup_dH_theta"]), str(int(r["converged"])), json.dumps(r["error"])]
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        out = _out_dir(args)
        (out / "sweep.csv").write_text(text)
        _write_json(out / "sweep.json", {"config": {**pf.echo(), "alpha_list": alphas}, "rows": rows})
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_SOLVER


# ---------------------------------------------------------------------------
# plumbing


def _out_dir(args) -> Path:
    out = Path(args.out or "falva-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=1, default=_json_default))


def _dump(args, name: str, payload: dict):
    if args.out:
        _write_json(_out_dir(args) / name, payload)


def _emit(args, name: str, payload: dict):
    print(json.dumps(payload, default=_json_default))
    _dump(args, name, payload)


COMMANDS = {
    "derive": cmd_derive,
    "check": cmd_check,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "identities": cmd_identities,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="falva", description="Fractional action-like variational problems.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "derive": "print the Euler-Lagrange equations with the friction force",
        "check": "residual report of a trajectory CSV",
        "solve": "solve the problem file and write JSON + CSV",
        "sweep": "solve for a list of alpha values",
        "identities": "verify the unconditional identities",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--problem", required=True, help="problem file (INI)")
        p.add_argument("--trajectory", help="trajectory CSV (theta,q0,...,q0d1,...)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--alpha-list", help="comma-separated alpha values for sweep")
        p.add_argument("--grid", type=int, help="number of report / output nodes")
        p.add_argument("--tol", type=float, help="residual tolerance")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        pf = load_problem(args.problem)
        if args.grid is not None:
            if args.grid < 2:
                raise InputError("--grid must be at least 2")
            pf.grid = pf.config.report_points = args.grid
        return COMMANDS[args.command](args, pf)
    except (ProblemFileError, InputError, sx.ParseError) as exc:
        print(f"falva: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SOLVER_ERRORS as exc:
        print(f"falva: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except core.SingularPointError as exc:
        print(f"falva: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
