"""Command-line interface: ``bdsprobe {identify,sample,verify,qed-sim,qed-fidelity}``.

Exit codes: 0 success, 1 a verification check failed, 2 invalid input or
configuration, 3 numerical abort (norm drift during integration).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import cavity as cv
from .checks import run_all_checks
from .protocol import BellCoefficients, StepId, run_ideal_identification
from .qlinalg import NormDriftError
from .sampling import ShotPlan, estimate

SCHEMA_VERSION = "1.0"

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

QED_KEYS = {"g_a", "omega_ra", "delta_a", "delta_b0", "Delta_a", "Delta_b0", "delta_1", "n_ph"}
QED_OPTIONAL = {"lab_frequencies"}

UNITS_NOTE = "All frequencies are in units of g_a and all times in units of 1/g_a."


class ConfigError(ValueError):
    """Invalid command-line or parameter-file input."""


def _parse_coeffs(text: str) -> BellCoefficients:
    try:
        values = tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"--coeffs must be four comma-separated numbers: {exc}") from None
    try:
        return BellCoefficients(values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _parse_step(text: str) -> StepId:
    try:
        return StepId.parse(text)
    except ValueError:
        raise ConfigError(f"unknown step {text!r}; use 1, 2, 3 or xx, yy, zz") from None


def load_qed_params(path, step) -> cv.CavityParams:
    """Read a parameter file and derive g_b and Omega_b for ``step``."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read parameter file {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("parameter file must hold a JSON object")
    missing = QED_KEYS - raw.keys()
    extra = raw.keys() - QED_KEYS - QED_OPTIONAL
    if missing:
        raise ConfigError(f"parameter file lacks {sorted(missing)}")
    if extra:
        raise ConfigError(
            f"unexpected keys {sorted(extra)}; g_b and omega_rb are derived, not accepted"
        )
    n_ph = raw["n_ph"]
    if not isinstance(n_ph, int) or isinstance(n_ph, bool):
        raise ConfigError("n_ph must be an integer")
    try:
        params = cv.build_params(
            step,
            g_a=float(raw["g_a"]),
            omega_ra=float(raw["omega_ra"]),
            delta_a=float(raw["delta_a"]),
            delta_b=float(raw["delta_b0"]),
            Delta_a=float(raw["Delta_a"]),
            Delta_b=float(raw["Delta_b0"]),
            delta_1=float(raw["delta_1"]),
            n_ph=n_ph,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if raw.get("lab_frequencies") is not None:
        params = params.replace(lab_frequencies=dict(raw["lab_frequencies"]))
    return params


def _tuned(params: cv.CavityParams, step: StepId, method: str, dt: float) -> cv.CavityParams:
    if method == "none":
        return params
    try:
        return cv.tune_delta1(params, step, method=method, dt=dt)[1]
    except ValueError as exc:
        raise ConfigError(f"delta_1 tuning failed: {exc}") from None


def _dump(obj: dict) -> str:
    return json.dumps({"schema_version": SCHEMA_VERSION, **obj}, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------- #
# commands


def cmd_identify(args) -> int:
    c = _parse_coeffs(args.coeffs)
    res = run_ideal_identification(c)
    _emit(_dump({
        "m": list(res.m),
        "recovered": list(res.recovered.c),
        "projected": res.recovered.projected,
        "residual_trace_distance": res.residual_trace_distance,
    }), args.out)
    return EXIT_OK


def cmd_sample(args) -> int:
    c = _parse_coeffs(args.coeffs)
    try:
        plan = ShotPlan(args.shots, args.seed, args.recovery_shots)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    report = estimate(c, plan)
    _emit(_dump({"seed": args.seed, "coefficients": list(c.c), **report.to_dict()}), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_all_checks()
    ok = all(r.passed for r in results)
    _emit(_dump({"checks": [r.to_dict() for r in results], "pass": ok}), args.out)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_qed_sim(args) -> int:
    step = _parse_step(args.step)
    if not args.t_max > 0:
        raise ConfigError("--t-max must be positive")
    if args.n_samples < 2:
        raise ConfigError("--n-samples must be at least 2")
    if not args.dt > 0:
        raise ConfigError("--dt must be positive")
    if args.format == "csv" and not args.out:
        raise ConfigError("qed-sim with CSV output needs --out (the JSON summary goes next to it)")
    params = _tuned(load_qed_params(args.params, step), step, args.tuning, args.dt)
    coeffs = cv.coefficients_for_step(step, params)
    series = cv.simulate_comparison(params, step, cv.benchmark_initial_state(step),
                                    args.t_max, args.n_samples, dt=args.dt)
    summary = {
        "step": int(step),
        "observable": series.observable,
        "lambda": coeffs.lam,
        "gate_time": cv.gate_time(coeffs.lam) if coeffs.lam else None,
        "delta1_tuned": params.delta_1,
        "tuning": args.tuning,
        "omega_b": params.omega_rb,
        "g_b": params.g_b,
        "max_deviation": series.max_deviation,
        "leakage": series.mean_leakage,
        "max_leakage": float(series.leakage.max()),
    }
    if args.format == "json":
        summary["t"] = series.times.tolist()
        summary["full"] = series.full_values.tolist()
        summary["effective"] = series.effective_values.tolist()
        _emit(_dump(summary), args.out)
        return EXIT_OK

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "full", "effective"])
    for row in zip(series.times, series.full_values, series.effective_values):
        writer.writerow([f"{x:.17g}" for x in row])
    out = Path(args.out)
    out.write_text(buf.getvalue())
    out.with_suffix(".json").write_text(_dump(summary))
    return EXIT_OK


def cmd_qed_fidelity(args) -> int:
    step = _parse_step(args.step)
    if not args.dt > 0:
        raise ConfigError("--dt must be positive")
    params = _tuned(load_qed_params(args.params, step), step, args.tuning, args.dt)
    try:
        rep = cv.full_gate_fidelity(params, step, n=args.n, dt=args.dt,
                                    effective_only=args.effective_only)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if rep.outside_validity:
        print(f"warning: leakage {rep.leakage:.3g} exceeds {cv.LEAKAGE_LIMIT:g}; "
              "outside the adiabatic regime", file=sys.stderr)
    _emit(_dump({
        "step": int(step),
        "fidelity": rep.fidelity,
        "leakage": rep.leakage,
        "gate_time": rep.gate_time,
        "lambda_used": rep.lambda_used,
        "outside_validity": rep.outside_validity,
        "effective_only": bool(args.effective_only),
        "delta1_tuned": params.delta_1,
        "tuning": args.tuning,
        "omega_b": params.omega_rb,
        "g_b": params.g_b,
    }), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------- #


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bdsprobe",
        description="Nondestructive identification of Bell-diagonal states with a probe qubit, "
        "and cavity-QED simulations of the probe gates. " + UNITS_NOTE,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("identify", help="run the ideal three-step protocol on given coefficients")
    p.add_argument("--coeffs", required=True, help="c1,c2,c3,c4 (a probability vector)")
    common(p)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("sample", help="estimate coefficients from finite probe statistics")
    p.add_argument("--coeffs", required=True, help="true c1,c2,c3,c4")
    p.add_argument("--shots", type=int, default=100_000, help="shots per step (default 1e5)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--recovery-shots", action="store_true",
                   help="also count the recovery-pass readouts (doubles the shots per step)")
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("verify", help="self-check the protocol algebra")
    common(p)
    p.set_defaults(func=cmd_verify)

    def qed(p):
        p.add_argument("--params", required=True,
                       help="JSON file with g_a, omega_ra, delta_a, delta_b0, Delta_a, Delta_b0, "
                       "delta_1, n_ph (g_b and Omega_b are derived)")
        p.add_argument("--step", required=True, help="1|2|3 or xx|yy|zz")
        p.add_argument("--tuning", choices=("floquet", "formula", "none"), default="floquet",
                       help="how delta_1 is chosen: null the field of the full model (floquet), "
                       "of the closed-form expression (formula), or keep the file value (none)")
        p.add_argument("--dt", type=float, default=cv.DEFAULT_DT,
                       help="RK4 step in 1/g_a (capped at 2 pi/(50 w_max))")
        common(p)

    p = sub.add_parser("qed-sim", help="full vs effective probe trajectory (CSV + JSON summary)")
    qed(p)
    p.add_argument("--t-max", type=float, default=510.0)
    p.add_argument("--n-samples", type=int, default=511)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_qed_sim)

    p = sub.add_parser("qed-fidelity", help="full-model gate fidelity at the first gate time")
    qed(p)
    p.add_argument("--n", type=int, default=0, help="gate-time index n in (2n+1) pi/(4 lambda)")
    p.add_argument("--effective-only", action="store_true",
                   help="use the effective two-qubit Hamiltonian instead of the full model")
    p.set_defaults(func=cmd_qed_fidelity)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NormDriftError, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
