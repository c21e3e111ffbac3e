"""Command-line entry point: ``catwell <command> [options]``.

Every command writes CSV (``# key=value`` metadata, header, rows) or JSON
with sorted keys.  Floats are printed with ``%.12e`` so repeated runs are
byte-identical.  Exit codes: 0 success, 1 numerical failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    BudgetExceededError,
    ConfigError,
    DegenerateGapError,
    NonConvergenceError,
    RegimeError,
)
from .params import (
    DEFAULT_A0,
    TWO_PI,
    DimensionlessSystem,
    PhysicalParams,
    ScaledCoords,
    derive_optical,
    params_from_mapping,
    power_from_photon_number,
    read_config,
    scaled_coords,
    to_dimensionless,
)
from .potential import critical_photon_number, find_minima, potential_curve, v_prime

log = logging.getLogger("catwell")

FLOAT_FMT = "%.12e"


# ------------------------------------------------------------------ output


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def fmt_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % float(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        # non-finite values have no JSON literal
        return float(FLOAT_FMT % v) if math.isfinite(v) else None
    return v


def render(payload, fmt: str) -> str:
    if fmt == "json":
        if isinstance(payload, Table):
            payload = {
                "meta": payload.meta,
                "columns": payload.columns,
                "rows": [list(r) for r in payload.rows],
            }
        return json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n"
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    if not isinstance(payload, Table):
        # a single record becomes a one-row table
        flat = {k: v for k, v in sorted(payload.items()) if not isinstance(v, (dict, list, tuple))}
        payload = Table(columns=list(flat), rows=[list(flat.values())])
    buf = io.StringIO()
    for key in sorted(payload.meta):
        buf.write(f"# {key}={fmt_value(payload.meta[key])}\n")
    buf.write(",".join(payload.columns) + "\n")
    for row in payload.rows:
        buf.write(",".join(fmt_value(v) for v in row) + "\n")
    return buf.getvalue()


def emit(payload, fmt: str = "csv", path: str | None = None) -> None:
    """Write a Table or a record dict as CSV/JSON to ``path`` (stdout for None or '-')."""
    text = render(payload, fmt)
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    Path(path).write_text(text, encoding="utf-8")


def read_table(path) -> Table:
    """Inverse of the CSV emitter: metadata strings, header, float rows."""
    meta = {}
    columns = None
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
        elif columns is None:
            columns = line.split(",")
        else:
            rows.append([_parse_cell(c) for c in line.split(",")])
    if columns is None:
        raise ConfigError(f"{path}: no header row")
    return Table(columns=columns, rows=rows, meta=meta)


def _parse_cell(text: str):
    try:
        return float(text)
    except ValueError:
        return text


# ------------------------------------------------------------ resolution


def resolve_params(args) -> tuple[PhysicalParams, float]:
    if args.config:
        if not Path(args.config).is_file():
            raise ConfigError(f"config file not found: {args.config}")
        p, a0 = read_config(args.config)
    else:
        p, a0 = params_from_mapping({})
    if getattr(args, "omega_hz", None) is not None:
        values = p.as_hz_dict()
        values["omega_hz"] = args.omega_hz
        p, _ = params_from_mapping(values)
    return p, a0


def resolve_system(args, lam: float = 1.0) -> tuple[DimensionlessSystem, PhysicalParams, float]:
    p, a0 = resolve_params(args)
    base = to_dimensionless(p, critical_photon_number(p) * lam)
    r = args.r if args.r is not None else base.r
    delta = args.delta if args.delta is not None else base.delta
    return DimensionlessSystem(r=r, delta=delta, lam=lam, Omega_ref=p.Omega), p, a0


def base_meta(args, p: PhysicalParams, a0: float, sys_: DimensionlessSystem | None = None) -> dict:
    meta = {"command": args.command, "version": __version__, "a0": a0}
    meta.update(p.as_hz_dict())
    if sys_ is not None:
        meta.update({"r": sys_.r, "delta": sys_.delta, "omega_rad_s": sys_.Omega_ref})
    for key, value in sorted(vars(args).items()):
        if key in ("func", "command", "out", "verbose") or value is None:
            continue
        meta[f"arg_{key}"] = value if not isinstance(value, list) else " ".join(fmt_value(v) for v in value)
    return meta


# -------------------------------------------------------------- commands


def cmd_potential(args) -> int:
    sys_, p, a0 = resolve_system(args, args.lam)
    q_max = args.q_max
    if q_max is None:
        q_max = 10.0
        if sys_.lam > 1.0 and sys_.delta < 0.5:
            q_max = max(q_max, 2.0 * find_minima(sys_).q_min)
    q = np.linspace(-q_max, q_max, args.n_points)
    curve = potential_curve(sys_, q)
    table = Table(["q", "v", "dv_dq"], meta=base_meta(args, p, a0, sys_))
    table.rows = [[a, b, c] for a, b, c in zip(curve.q, curve.v, v_prime(q, sys_))]
    emit(table, args.format or "csv", args.out)
    return 0


def _lambda_grid(args, sys_: DimensionlessSystem) -> np.ndarray:
    if args.lam is not None:
        return np.array(args.lam, dtype=float)
    lo, hi, n = args.lam_range
    lams = np.linspace(float(lo), float(hi), int(n))
    if args.critical_units:
        from .spectrum import transition_scale

        lams = 1.0 + lams * transition_scale(sys_)
    return lams


def cmd_spectrum(args) -> int:
    from .spectrum import EVEN_COUPLED, sweep_lambda

    sys_, p, a0 = resolve_system(args)
    lams = _lambda_grid(args, sys_)
    tab = sweep_lambda(sys_, lams, k=args.k)
    idx = [i for i in EVEN_COUPLED if i in tab.dcouplings]
    cols = ["lambda"] + [f"E{i}" for i in range(tab.k)] + [f"dcoupling{i}" for i in idx] + ["converged"]
    table = Table(cols, meta=base_meta(args, p, a0, sys_))
    for n, lam in enumerate(tab.lambdas):
        row = [lam] + list(tab.energies[n]) + [tab.dcouplings[i][n] for i in idx] + [bool(tab.converged[n])]
        table.rows.append(row)
    emit(table, args.format or "csv", args.out)
    failed = [e for e in tab.errors if e]
    for e in failed:
        print(f"catwell: numerical failure: {e}", file=sys.stderr)
    return 1 if failed else 0


def cmd_fit_scaling(args) -> int:
    from .spectrum import scaling_fit

    fit = scaling_fit(r_ref=args.r_ref)
    out = fit.to_dict()
    out["meta"] = {"command": args.command, "version": __version__, "r_ref": args.r_ref}
    emit(out, args.format or "json", args.out)
    return 0


def _scaled_from_args(args) -> ScaledCoords:
    p, a0 = resolve_params(args)
    sc = scaled_coords(p, a0)
    pick = lambda flag, default: default if flag is None else flag  # noqa: E731
    return ScaledCoords(
        Omega0=pick(args.omega0, sc.Omega0),
        Delta0=pick(args.delta0, sc.Delta0),
        kappa0=pick(args.kappa0, sc.kappa0),
        L0=pick(args.l0, sc.L0),
        m0=pick(args.m0, sc.m0),
        a0=pick(args.a0, sc.a0),
    )


def live_fit_constants():
    from .ramp import FitConstants
    from .spectrum import scaling_fit

    f = scaling_fit()
    return FitConstants(x=f.x, y=f.y, A=f.A, B=f.B)


def cmd_feasibility(args) -> int:
    from .ramp import REFERENCE_FIT, feasibility_report

    sc = _scaled_from_args(args)
    fit, mode = (live_fit_constants(), "live") if args.live else (REFERENCE_FIT, "reference")
    rep = feasibility_report(sc, fit, mode=mode).to_dict()
    emit(rep, args.format or "json", args.out)
    return 0


def cmd_ramp(args) -> int:
    from .ramp import LAMBDA_START, coherence_time, synthesize_schedule

    sys_, p, a0 = resolve_system(args)
    dn = args.target_dn if args.target_dn is not None else a0 * 1e-3
    t_coh = args.t_coh if args.t_coh is not None else coherence_time(p)
    if args.no_budget:
        t_coh = math.inf
    lam_start = LAMBDA_START if args.lam_start is None else args.lam_start
    meta = base_meta(args, p, a0, sys_)
    meta.update({"lam_target": 1.0 + dn, "t_coh_s": t_coh, "safety": args.safety})
    grid = None
    if args.q_max is not None and args.n_points is not None:
        from .spectrum import GridSpec

        grid = GridSpec(args.q_max, args.n_points)
    code = 0
    try:
        sched = synthesize_schedule(
            sys_, 1.0 + dn, safety=args.safety, Omega=p.Omega, t_coh=t_coh, lam_start=lam_start, k=args.k, grid=grid
        )
    except BudgetExceededError as exc:
        print(f"catwell: budget exceeded: {exc}", file=sys.stderr)
        sched = exc.schedule
        meta.update({"budget_exceeded": True, "lambda_reached": exc.lambda_reached, "q_min_reached": exc.q_min_reached})
        code = 1
    meta["total_time_s"] = sched.total_time
    table = Table(["t_s", "lambda", "rate_bound"], meta=meta)
    table.rows = [list(r) for r in zip(sched.times, sched.lambdas, sched.rate_bound)]
    emit(table, args.format or "csv", args.out)
    return code


def schedule_from_table(table: Table):
    from .ramp import RampSchedule

    try:
        col = {name: table.columns.index(name) for name in ("t_s", "lambda", "rate_bound")}
        r = float(table.meta["r"])
        delta = float(table.meta["delta"])
        Omega = float(table.meta["omega_rad_s"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"schedule file lacks required column or metadata: {exc}") from None
    data = np.array(table.rows, dtype=float)
    if data.ndim != 2 or len(data) < 2:
        raise ConfigError("schedule needs at least two rows")
    sched = RampSchedule(
        times=data[:, col["t_s"]],
        lambdas=data[:, col["lambda"]],
        rate_bound=data[:, col["rate_bound"]],
        safety=float(table.meta.get("safety", 1.0)),
        Omega=Omega,
        meta=dict(table.meta),
    )
    return sched, DimensionlessSystem(r=r, delta=delta, lam=float(sched.lambdas[0]), Omega_ref=Omega)


def cmd_evolve(args) -> int:
    from .evolve import cat_metrics, propagate_grid, propagate_modal, ramp_grid
    from .spectrum import GridSpec, eigenpairs

    if not Path(args.schedule).is_file():
        raise ConfigError(f"schedule file not found: {args.schedule}")
    sched, sys_ = schedule_from_table(read_table(args.schedule))
    if args.q_max is not None and args.n_points is not None:
        grid = GridSpec(args.q_max, args.n_points)
    else:
        grid = ramp_grid(sys_, sched, k=args.k)
    meta = {"command": "evolve", "version": __version__, "schedule": args.schedule, "r": sys_.r,
            "delta": sys_.delta, "omega_rad_s": sched.Omega, "q_max": grid.q_max, "n_points": grid.n_points,
            "dtau": args.dtau, "k": args.k, "method": args.method}
    table = Table(["method", "t_s", "lambda", "fidelity_gs", "parity_overlap", "separation", "norm"], meta=meta)
    methods = ("grid", "modal") if args.method == "both" else (args.method,)
    finals = {}
    for method in methods:
        if method == "grid":
            tr = propagate_grid(sched, sys_, grid=grid, dtau=args.dtau, n_records=args.n_records)
            for j in range(len(tr.t)):
                table.rows.append(["grid", tr.t[j], tr.lam[j], tr.fidelity_gs[j], tr.parity_overlap[j], tr.separation[j], tr.norm[j]])
            finals["grid"] = tr.final_metrics.fidelity_gs
        else:
            tr = propagate_modal(sched, sys_, k=args.k, grid=grid, n_records=args.n_records)
            op = tr.basis.systems[0].operator
            for j in range(len(tr.t)):
                state = tr.wave_state(j)
                m = cat_metrics(state, eigenpairs(op.with_lambda(float(tr.lam[j])), 2))
                table.rows.append(["modal", tr.t[j], tr.lam[j], tr.fidelity_gs[j], m.parity_overlap, m.separation, tr.norm[j]])
            finals["modal"] = float(tr.fidelity_gs[-1])
    for name, value in finals.items():
        meta[f"final_fidelity_{name}"] = value
    emit(table, args.format or "csv", args.out)
    return 0


def reference_report(live: bool = False) -> dict:
    """Every headline number of the worked feasibility example, recomputed."""
    from .ramp import REFERENCE_FIT, feasibility_report, fitted_rate_coefficient

    table1 = PhysicalParams.from_hz()
    d = derive_optical(table1)
    nc1 = critical_photon_number(table1)
    worked = ScaledCoords(Omega0=80.0, Delta0=0.01, kappa0=0.1, L0=0.05, m0=0.1, a0=DEFAULT_A0)
    rep = feasibility_report(worked, REFERENCE_FIT)
    abstract = PhysicalParams.from_hz(length_m=3e-3, kappa_hz=1e5)
    out = {
        "G_over_2pi_Hz_per_m": d.G / TWO_PI,
        "g_over_2pi_Hz": d.g / TWO_PI,
        "n_c": nc1,
        "power_at_n_c_nW": power_from_photon_number(table1, nc1) * 1e9,
        "n_c_worked_times_delta0": rep.n_c * worked.Delta0,
        "power_nW": rep.input_power_W * 1e9,
        "omega0_bound": rep.omega0_bound,
        "omega0_bound_constant": rep.omega0_bound_constant,
        "gamma_bound_hz": rep.gamma_bound_hz,
        "t_coh_s": rep.t_coh_s,
        "t_coh_full_s": rep.t_coh_full_s,
        "rate_coeff_baseline": fitted_rate_coefficient(ScaledCoords(1.0, 1.0, 1.0, 1.0, 1.0), REFERENCE_FIT),
        "separation_2qmin": rep.separation_2qmin,
        "separation_coeff_times_sqrt_a0": rep.separation_compact_expr,
        "poisson_rel": rep.poisson_rel,
        "poisson_coeff": rep.poisson_coeff,
        "finesse_abstract": derive_optical(abstract).finesse,
        "x": REFERENCE_FIT.x,
        "y": REFERENCE_FIT.y,
        "A": REFERENCE_FIT.A,
        "B": REFERENCE_FIT.B,
        "worked_point": rep.to_dict(),
    }
    if live:
        fit = live_fit_constants()
        out["live"] = feasibility_report(worked, fit, mode="live").to_dict()
    return out


def cmd_report(args) -> int:
    emit(reference_report(live=args.live), args.format or "json", args.out)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value parameter file (frequencies in Hz)")
    common.add_argument("--out", default="-", help="output path (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), help="output format")
    common.add_argument("-v", "--verbose", action="store_true")

    system = argparse.ArgumentParser(add_help=False)
    system.add_argument("--r", type=float, help="override g/kappa")
    system.add_argument("--delta", type=float, help="override Delta/kappa")
    system.add_argument("--omega-hz", type=float, help="override the mechanical frequency")

    parser = argparse.ArgumentParser(prog="catwell", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("potential", parents=[common, system], help="v(q) at one lambda")
    sp.add_argument("--lambda", dest="lam", type=float, default=1.0)
    sp.add_argument("--q-max", type=float)
    sp.add_argument("--n-points", type=int, default=401)
    sp.set_defaults(func=cmd_potential)

    sp = sub.add_parser("spectrum", parents=[common, system], help="energies and couplings versus lambda")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--lambda", dest="lam", type=float, nargs="+")
    g.add_argument("--lam-range", nargs=3, metavar=("LO", "HI", "N"), default=("0.9", "1.9", "11"))
    sp.add_argument("--critical-units", action="store_true",
                    help="read --lam-range as mu in lambda = 1 + mu * transition width")
    sp.add_argument("--k", type=int, default=10)
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("fit-scaling", parents=[common], help="power-law fits of gap and coupling")
    sp.add_argument("--r-ref", type=float, help="g/kappa at g0/kappa0 = 1")
    sp.set_defaults(func=cmd_fit_scaling)

    sp = sub.add_parser("feasibility", parents=[common], help="feasibility chain at a scaled point")
    for flag in ("--omega0", "--kappa0", "--l0", "--m0", "--delta0", "--a0"):
        sp.add_argument(flag, type=float)
    sp.add_argument("--live", action="store_true", help="use fit constants from live eigendata")
    sp.set_defaults(func=cmd_feasibility)

    sp = sub.add_parser("ramp", parents=[common, system], help="bound-saturating ramp schedule")
    sp.add_argument("--target-dn", type=float, help="delta n / n_c at the end (default a0 * 1e-3)")
    sp.add_argument("--safety", type=float, default=1.0)
    sp.add_argument("--lam-start", type=float)
    sp.add_argument("--t-coh", type=float, help="time budget in s (default from parameters)")
    sp.add_argument("--no-budget", action="store_true")
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--q-max", type=float, help="fixed grid half-width (with --n-points); default: converged grid")
    sp.add_argument("--n-points", type=int)
    sp.set_defaults(func=cmd_ramp)

    sp = sub.add_parser("evolve", parents=[common], help="propagate through a schedule file")
    sp.add_argument("--schedule", required=True)
    sp.add_argument("--method", choices=("grid", "modal", "both"), default="grid")
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--dtau", type=float, default=0.01)
    sp.add_argument("--n-records", type=int, default=100)
    sp.add_argument("--q-max", type=float)
    sp.add_argument("--n-points", type=int)
    sp.set_defaults(func=cmd_evolve)

    sp = sub.add_parser("report-paper", parents=[common], help="recompute the worked feasibility example")
    sp.add_argument("--live", action="store_true")
    sp.set_defaults(func=cmd_report)
    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="catwell: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (ConfigError, RegimeError) as exc:
        print(f"catwell: error: {exc}", file=sys.stderr)
        return 2
    except (NonConvergenceError, DegenerateGapError, BudgetExceededError) as exc:
        print(f"catwell: numerical failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"catwell: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"catwell: cannot write output: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
