"""Command-line interface.

Exit status: 0 success, 1 validation error, 2 numerical or pipeline
failure, 3 verification failure.
"""
from __future__ import annotations

import argparse
import json
import sys as _sys
from pathlib import Path

import numpy as np

from .errors import NumericalError, ValidationError
from .geometry import GeometricAnalysis, analyze
from .ltisim import NotSettledError, ZeroFinalValueError, overshoot, step_response
from .matkit import TolerancePolicy, default_tolerances
from .sysfile import load_system, write_system
from .system import StateSpaceSystem
from .zerocancel import CancellationReport, InputSelection, run_pipeline, verify_cancellation

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_VERIFICATION = 0, 1, 2, 3


def _zeros_json(values):
    return [{"re": float(z.real), "im": float(z.imag)} for z in values]


def _fmt_zero(z, digits=4):
    if abs(z.imag) == 0.0:
        return f"{z.real:.{digits}f}"
    return f"{z.real:.{digits}f}{z.imag:+.{digits}f}j"


def _fmt_set(values):
    return "{" + ", ".join(_fmt_zero(z) for z in values) + "}"


def _tolerances_json(tol: TolerancePolicy):
    return {"rank_tol": tol.rank_tol, "eq_tol": tol.eq_tol, "stability_margin": tol.stability_margin}


def analysis_report(sys: StateSpaceSystem, ga: GeometricAnalysis, tol: TolerancePolicy) -> dict:
    return {
        "system": sys.name,
        "dims": {"n": sys.n, "m": sys.m, "p": sys.p},
        "subspace_dims": ga.subspace_dims,
        "reachable": ga.is_reachable,
        "right_invertible": ga.is_right_invertible,
        "zeros": {
            "all": _zeros_json(ga.zeros.zeros),
            "minimum_phase": _zeros_json(ga.zeros.minimum_phase),
            "non_minimum_phase": _zeros_json(ga.zeros.non_minimum_phase),
        },
        "tolerances": _tolerances_json(tol),
    }


def cancel_report(sys, result, tol) -> dict:
    rep: CancellationReport = result.report
    out = analysis_report(sys, result.analysis, tol)
    out.update({
        "selection": [j + 1 for j in result.selection.kept],
        "compensator_order": rep.compensator_order,
        "cascade": {
            "zeros": _zeros_json(rep.cascade_zeros),
            "reachable": rep.cascade_reachable,
            "right_invertible": rep.cascade_right_invertible,
        },
        "checks": {k: {"passed": ok, "detail": detail} for k, (ok, detail) in rep.checks.items()},
        "passed": rep.passed,
    })
    return out


def _analysis_text(rep: dict) -> str:
    d = rep["dims"]
    sd = rep["subspace_dims"]

    def zs(key):
        return [complex(z["re"], z["im"]) for z in rep["zeros"][key]]

    lines = [
        f"System {rep['system'] or '(unnamed)'}: n = {d['n']}, m = {d['m']}, p = {d['p']}",
        f"dim R = {sd['reachable']}, dim V* = {sd['v_star']}, dim S* = {sd['s_star']}, "
        f"dim (V* ∩ S*) = {sd['r_v_star']}",
        "The system is reachable, since R = X." if rep["reachable"]
        else "The system is not reachable.",
        "The system is right-invertible, since V* + S* = X." if rep["right_invertible"]
        else "The system is not right-invertible.",
        f"Z = Z_MP ∪ Z_NMP = {_fmt_set(zs('minimum_phase'))} ∪ {_fmt_set(zs('non_minimum_phase'))}",
    ]
    return "\n".join(lines)


def _cancel_text(rep: dict) -> str:
    cz = [complex(z["re"], z["im"]) for z in rep["cascade"]["zeros"]]
    lines = [
        _analysis_text(rep),
        f"Input selection: {rep['selection']}",
        f"Feedforward compensator order: {rep['compensator_order']}",
        f"Cascade zeros: {_fmt_set(cz)}",
        "The cascade is reachable." if rep["cascade"]["reachable"] else "The cascade is not reachable.",
        "The cascade is right-invertible." if rep["cascade"]["right_invertible"]
        else "The cascade is not right-invertible.",
    ]
    lines += [f"  [{'PASS' if c['passed'] else 'FAIL'}] {k}: {c['detail']}" for k, c in rep["checks"].items()]
    return "\n".join(lines)


def _emit(rep: dict, fmt: str, text_fn) -> None:
    if fmt == "json":
        print(json.dumps(rep, indent=2))
    else:
        print(text_fn(rep))


def _tol_from_args(args) -> TolerancePolicy:
    base = default_tolerances()
    return TolerancePolicy(
        rank_tol=args.tol_rank if args.tol_rank is not None else base.rank_tol,
        eq_tol=args.tol_eq if args.tol_eq is not None else base.eq_tol,
        stability_margin=args.margin if args.margin is not None else base.stability_margin,
    )


def _parse_selection(text: str | None, m: int) -> InputSelection:
    if text is None:
        return InputSelection.all(m)
    try:
        kept = tuple(int(tok) - 1 for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise ValidationError(f"--select: expected comma-separated channel numbers, got {text!r}", kind="flag") from exc
    return InputSelection(kept).validate(m)


def cmd_analyze(args) -> int:
    tol = _tol_from_args(args)
    sys = load_system(args.path, tol)
    _emit(analysis_report(sys, analyze(sys, tol), tol), args.format, _analysis_text)
    return EXIT_OK


def cmd_cancel(args) -> int:
    tol = _tol_from_args(args)
    sys = load_system(args.path, tol)
    selection = _parse_selection(args.select, sys.m)
    result = run_pipeline(sys, selection, tol=tol)
    rep = cancel_report(sys, result, tol)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_system(result.compensator, out / "compensator.json")
    write_system(result.cascade, out / "cascade.json")
    (out / "report.json").write_text(json.dumps(rep, indent=2) + "\n")
    _emit(rep, args.format, _cancel_text)
    return EXIT_OK if rep["passed"] else EXIT_VERIFICATION


def cmd_simulate(args) -> int:
    sys = load_system(args.path, check_rank=False)
    if not 1 <= args.input <= sys.m:
        raise ValidationError(f"--input {args.input} out of range 1..{sys.m}", kind="flag")
    traj = step_response(sys, args.input - 1, args.tf, args.dt)
    parts = []
    for i in range(traj.n_outputs):
        try:
            parts.append(f"y{i + 1}={overshoot(traj, i):.6f}")
        except ZeroFinalValueError:
            parts.append(f"y{i + 1}=undefined(zero final value)")
        except NotSettledError:
            parts.append(f"y{i + 1}=undefined(not settled)")
    summary = f"overshoot (input {args.input}): " + " ".join(parts)
    if args.out:
        with open(args.out, "w") as fh:
            traj.write_csv(fh)
        print(summary)
    else:
        traj.write_csv(_sys.stdout)
        print(summary, file=_sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    tol = _tol_from_args(args)
    plant = load_system(args.original, tol)
    comp = load_system(args.compensator, tol, check_rank=False)
    cas = load_system(args.cascade, tol, check_rank=False)
    if comp.p != plant.m:
        raise ValidationError(f"compensator has {comp.p} outputs, plant has {plant.m} inputs", kind="shape")
    if (cas.n, cas.p) != (plant.n, plant.p) or cas.m != comp.m:
        raise ValidationError(
            f"cascade dims (n={cas.n}, m={cas.m}, p={cas.p}) inconsistent with plant and compensator",
            kind="shape",
        )
    if comp.n > cas.m:
        raise ValidationError("compensator order exceeds cascade input count", kind="shape")
    rep = verify_cancellation(plant, cas, comp, tol)
    for name, (ok, detail) in rep.checks.items():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    if not rep.passed:
        failing = ", ".join(k for k, (ok, _) in rep.checks.items() if not ok)
        print(f"verification failed: {failing}", file=_sys.stderr)
        return EXIT_VERIFICATION
    return EXIT_OK


def _add_tol_flags(p):
    p.add_argument("--tol-rank", type=float, default=None, help="relative rank tolerance")
    p.add_argument("--tol-eq", type=float, default=None, help="identity/residual tolerance")
    p.add_argument("--margin", type=float, default=None, help="stability margin")
    p.add_argument("--format", choices=("json", "text"), default="text")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geozero", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="geometric analysis and invariant zeros")
    p.add_argument("path")
    _add_tol_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("cancel", help="synthesize the zero-cancelling feedforward compensator")
    p.add_argument("path")
    p.add_argument("--select", default=None, help="kept input channels, 1-based, e.g. 2,3")
    p.add_argument("--out", default=".", help="output directory")
    _add_tol_flags(p)
    p.set_defaults(func=cmd_cancel)

    p = sub.add_parser("simulate", help="step response as CSV")
    p.add_argument("path")
    p.add_argument("--input", type=int, default=1, help="input channel, 1-based")
    p.add_argument("--tf", type=float, default=10.0, help="horizon in seconds")
    p.add_argument("--dt", type=float, default=1e-3, help="sample time in seconds")
    p.add_argument("--out", default=None, help="CSV path (default: standard output)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="re-check a plant, compensator and cascade triple")
    p.add_argument("original")
    p.add_argument("compensator")
    p.add_argument("cascade")
    _add_tol_flags(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error ({exc.kind}): {exc}", file=_sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=_sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
