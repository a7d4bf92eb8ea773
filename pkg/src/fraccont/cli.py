"""Command-line front end.

Every subcommand reads its parameters from flags, falling back to an optional
``key = value`` file given with ``--config`` (one pair per line, ``#`` starts a
comment), then to built-in defaults.  Exit status is 0 on success, 2 on
invalid input (the message names the offending key) and 1 when a solver
fails (the message carries the error name).
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from fraccont.abel import relaxation_problem, solve_second_kind
from fraccont.contlab import RandomOrderConfig, SweepConfig, monte_carlo_orders, sweep_orders
from fraccont.errors import FracContError, SolverError, ValidationError
from fraccont.fracgrid import GridFn, SequentialOrders, TimeGrid
from fraccont.illposed import (
    abel_halfline_instability,
    exp_multiplier_instability,
    witnesses_to_csv,
)
from fraccont.mlf import MLQuery, ml_eval
from fraccont.seqfde import SequentialProblem, solve_sequential
from fraccont.specdiff import (
    ModeTrajectory,
    ModeVector,
    dirichlet_laplacian_1d,
    solve_forced,
    solve_homogeneous,
)


@dataclass(frozen=True)
class Param:
    name: str
    type: Callable[[str], Any]
    default: Any = None
    required: bool = False
    help: str = ""
    check: Callable[[Any], bool] | None = None
    why: str = ""


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in str(text).split(",") if x.strip())


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


_POS = (lambda v: v > 0, "must be positive")
_NONNEG = (lambda v: v >= 0, "must be non-negative")
_ATLEAST1 = (lambda v: v >= 1, "must be at least 1")


def _p(name, type_, default=None, required=False, help="", rule=None) -> Param:
    check, why = rule if rule is not None else (None, "")
    return Param(name, type_, default, required, help, check, why)


COMMON_SWEEP = [
    _p("target", str, "spectral", help="abel | seqfde | spectral | spectral-forced"),
    _p("alpha", float, 0.5, rule=_POS),
    _p("h0", float, 0.1, rule=_POS),
    _p("levels", int, 6, rule=_ATLEAST1),
    _p("s", float, 1.0, rule=_NONNEG),
    _p("rho", float, 0.0, rule=_NONNEG),
    _p("beta", float, 1.0, rule=_POS),
    _p("lam", float, -1.0),
    _p("gamma", float, None),
    _p("norm", str, None, help="sup | lp | hs"),
    _p("p", float, 2.0),
    _p("T", float, 1.0, rule=_POS),
    _p("N", int, 256, rule=_ATLEAST1),
    _p("P", int, 64, rule=_ATLEAST1),
    _p("L", float, math.pi, rule=_POS),
    _p("theta", str, "decay", help="e1 | decay"),
    _p("delta", float, 0.01),
    _p("alpha0", float, None),
    _p("alpha1", float, None),
]

COMMANDS: dict[str, list[Param]] = {
    "mlf": [
        _p("alpha", float, required=True, rule=_POS),
        _p("beta", float, 1.0),
        _p("z", float, required=True),
        _p("tol", float, 1e-12, rule=_POS),
    ],
    "abel": [
        _p("alpha", float, required=True, rule=_POS),
        _p("lam", float, -1.0),
        _p("g", float, 1.0),
        _p("T", float, 1.0, rule=_POS),
        _p("N", int, 1024, rule=_ATLEAST1),
        _p("mesh", str, "uniform", help="uniform | graded"),
        _p("tol", float, 1e-12, rule=_POS),
        _p("out", str, None),
    ],
    "seqfde": [
        _p("etas", _floats, required=True, help="comma-separated orders"),
        _p("p", _floats, required=True, help="comma-separated constant coefficients p_1..p_k"),
        _p("b", _floats, required=True, help="comma-separated initial values b_1..b_k"),
        _p("f", float, 0.0),
        _p("gamma", float, None),
        _p("T", float, 1.0, rule=_POS),
        _p("N", int, 1024, rule=_ATLEAST1),
        _p("tol", float, 1e-12, rule=_POS),
        _p("out", str, None),
    ],
    "diffusion": [
        _p("alpha", float, required=True, rule=_POS),
        _p("beta", float, 1.0, rule=_POS),
        _p("L", float, 1.0, rule=_POS),
        _p("P", int, 64, rule=_ATLEAST1),
        _p("theta", str, "e1", help="e1 | decay"),
        _p("s", float, 1.0, rule=_NONNEG),
        _p("forced", int, 0, help="1: zero initial data, constant forcing with modes theta"),
        _p("T", float, 1.0, rule=_POS),
        _p("N", int, 100, rule=_ATLEAST1),
        _p("out", str, None),
        _p("physical_out", str, None),
        _p("nx", int, 65, rule=_ATLEAST1),
    ],
    "sweep": COMMON_SWEEP + [_p("out", str, None)],
    "montecarlo": COMMON_SWEEP + [
        _p("sampler", str, "uniform", help="uniform | two-point | point"),
        _p("low", float, 0.45),
        _p("high", float, 0.55),
        _p("trials", int, 64),
        _p("lambda_moment", float, 2.0),
        _p("nu", float, 1.0),
        _p("out", str, None),
    ],
    "illposed": [
        _p("example", str, "abel", help="abel | exp"),
        _p("nmin", int, 2),
        _p("nmax", int, 12),
        _p("a", float, 1.0, rule=_POS),
        _p("alpha", float, 0.5, rule=_POS),
        _p("out", str, None),
    ],
}


def read_config(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'", key="config")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fraccont",
                                     description="Fractional-order continuity toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, params in COMMANDS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="key = value parameter file")
        sp.add_argument("--seed", type=int, default=None)
        for p in params:
            # typed later so that flag and file values share one code path
            sp.add_argument(_flag(p.name), dest=p.name, default=None, help=p.help)
    return parser


def resolve(command: str, ns: argparse.Namespace, config: dict[str, str]) -> dict[str, Any]:
    """Merge flags over config over defaults; convert and check in declared order."""
    params = COMMANDS[command]
    known = {p.name for p in params} | {"seed"}
    for k in config:
        if k not in known:
            raise ValidationError(f"unknown key {k!r} for {command}", key=k)
    out: dict[str, Any] = {}
    for p in params:
        raw = getattr(ns, p.name)
        if raw is None:
            raw = config.get(p.name)
        if raw is None:
            if p.required:
                raise ValidationError(f"missing required parameter {p.name}", key=p.name)
            out[p.name] = p.default
            continue
        try:
            v = p.type(raw)
        except (TypeError, ValueError):
            raise ValidationError(f"cannot parse {p.name}={raw!r}", key=p.name) from None
        if p.check is not None and not p.check(v):
            raise ValidationError(f"{p.name} {p.why}, got {v}", key=p.name)
        out[p.name] = v
    seed = ns.seed if ns.seed is not None else config.get("seed")
    try:
        out["seed"] = None if seed is None else int(seed)
    except ValueError:
        raise ValidationError(f"cannot parse seed={seed!r}", key="seed") from None
    return out


# {{{ commands

def _emit(text: str | None, path: str | None) -> None:
    if path is None and text is not None:
        sys.stdout.write(text)


def cmd_mlf(a: dict) -> None:
    v = ml_eval(MLQuery(alpha=a["alpha"], beta=a["beta"], z=a["z"], tol=a["tol"]))
    print(repr(float(v)))


def cmd_abel(a: dict) -> None:
    if a["mesh"] == "uniform":
        grid = TimeGrid.uniform(a["T"], a["N"])
    elif a["mesh"] == "graded":
        grid = TimeGrid.graded_for(a["T"], a["N"], a["alpha"])
    else:
        raise ValidationError(f"mesh must be 'uniform' or 'graded', got {a['mesh']!r}", key="mesh")
    u = solve_second_kind(relaxation_problem(a["lam"], a["alpha"], grid, a["g"]), tol=a["tol"])
    if a["out"]:
        u.to_csv(a["out"])
    print(f"u(T) = {float(u.values[-1, 0])!r}")


def cmd_seqfde(a: dict) -> None:
    grid = TimeGrid.uniform(a["T"], a["N"])
    coeffs = [(lambda c: (lambda t: np.full_like(t, c)))(c) for c in a["p"]]
    sp = SequentialProblem(SequentialOrders(a["etas"]), coeffs, GridFn.constant(grid, a["f"]),
                           list(a["b"]))
    psi, y = solve_sequential(sp, gamma=a["gamma"], tol=a["tol"])
    if a["out"]:
        y.to_csv(a["out"])
    print(f"y(T) = {float(y.values[-1, 0])!r}")


def cmd_diffusion(a: dict) -> None:
    op = dirichlet_laplacian_1d(a["L"], a["P"])
    if a["theta"] == "e1":
        theta = ModeVector.unit(op.P)
    elif a["theta"] == "decay":
        theta = ModeVector.power_decay(op.P, 2.0 * a["s"] + 0.51)
    else:
        raise ValidationError(f"theta must be 'e1' or 'decay', got {a['theta']!r}", key="theta")
    grid = TimeGrid.uniform(a["T"], a["N"])
    if a["forced"]:
        f = ModeTrajectory(grid, np.tile(theta.coeffs, (grid.N + 1, 1)))
        traj = solve_forced(f, op, a["alpha"], a["beta"])
    else:
        traj = solve_homogeneous(theta, op, a["alpha"], a["beta"], grid)
    if a["out"]:
        traj.to_csv(a["out"])
    if a["physical_out"]:
        traj.physical_to_csv(a["physical_out"], a["L"], np.linspace(0.0, a["L"], a["nx"]))
    print(f"||v(T)||_L2 = {float(traj.hs_norms(op, 0.0)[-1])!r}")


def _sweep_config(a: dict):
    keys = ("target", "alpha", "h0", "levels", "norm", "s", "rho", "beta", "lam", "gamma", "p",
            "T", "N", "P", "L", "theta", "delta", "alpha0", "alpha1")
    return SweepConfig(**{k: a[k] for k in keys})


def _report_summary(r) -> str:
    return " ".join(r.footer())


def cmd_sweep(a: dict) -> None:
    r = sweep_orders(_sweep_config(a))
    _emit(r.to_csv(a["out"]), a["out"])
    print(_report_summary(r))


def cmd_montecarlo(a: dict) -> None:
    rc = RandomOrderConfig(sampler=a["sampler"], low=a["low"], high=a["high"], trials=a["trials"],
                           lambda_moment=a["lambda_moment"], nu=a["nu"],
                           seed=0 if a["seed"] is None else a["seed"])
    r = monte_carlo_orders(rc, _sweep_config(a))
    _emit(r.to_csv(a["out"]), a["out"])
    print(_report_summary(r))


def cmd_illposed(a: dict) -> None:
    if a["nmin"] < 2:
        raise ValidationError(f"nmin must be at least 2, got {a['nmin']}", key="nmin")
    if a["nmax"] < a["nmin"]:
        raise ValidationError("nmax must be >= nmin", key="nmax")
    ns = range(a["nmin"], a["nmax"] + 1)
    if a["example"] == "abel":
        ws = [abel_halfline_instability(n) for n in ns]
    elif a["example"] == "exp":
        ws = [exp_multiplier_instability(n, a["a"], a["alpha"]) for n in ns]
    else:
        raise ValidationError(f"example must be 'abel' or 'exp', got {a['example']!r}",
                              key="example")
    _emit(witnesses_to_csv(a["out"], ws), a["out"])


HANDLERS = {
    "mlf": cmd_mlf,
    "abel": cmd_abel,
    "seqfde": cmd_seqfde,
    "diffusion": cmd_diffusion,
    "sweep": cmd_sweep,
    "montecarlo": cmd_montecarlo,
    "illposed": cmd_illposed,
}

# }}}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = read_config(ns.config) if ns.config else {}
        args = resolve(ns.command, ns, config)
        HANDLERS[ns.command](args)
    except ValidationError as err:
        key = f" [{err.key}]" if err.key else ""
        print(f"error: {err.name}{key}: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except SolverError as err:
        print(f"error: {err.name}: {err}", file=sys.stderr)
        return 1
    except FracContError as err:
        print(f"error: {err.name}: {err}", file=sys.stderr)
        return 1
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
