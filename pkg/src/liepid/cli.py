"""Command-line experiment runner.

    liepid run CONFIG
    liepid reproduce NAME [--controller K] [--dt DT] [--t-final T] [--set key=value ...]
    liepid check-gains --ki KI --kd KD [--kp KP] [--gamma G] [--beta B ...]
    liepid sweep CONFIG_DIR
    liepid validate CONFIG

Exit status: 0 converged, 1 usage/parse/I-O error, 2 simulation aborted,
3 finished without meeting the convergence thresholds.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .analysis import ConvergenceReport, convergence_report, feasible_beta_interval
from .config import ConfigError, RunSpec, build_spec, convert_value, load_config, parse_number, serialize_config
from .simulator import SimulationAborted, Trajectory, simulate

EXIT_OK, EXIT_USAGE, EXIT_ABORTED, EXIT_UNMET = 0, 1, 2, 3

REFERENCE_BETA = 0.0039  # beta used for the second-order attitude study

_Q0 = (1.0, 1.0, 1.0, math.pi)  # 180 degrees about (1,1,1): 1/3 [-1 2 2; 2 -1 2; 2 2 -1]
_BIAS3 = (0.01, 0.02, 0.03)

REPRODUCTIONS = {
    "so3-first-order": dict(group="so3", controller="pi", kp=0.04, ki=0.01, bias=_BIAS3, q0=_Q0,
                            alpha=0.04, beta=100.0),
    "so3-second-order": dict(group="so3", controller="pid", kp=0.04, ki=0.01, kd=0.2, bias=_BIAS3,
                             bias_order="torque", q0=_Q0, alpha=0.04 * 0.0039, beta=0.0039, gamma=1.0),
    "se3-first-order": dict(group="se3", controller="pi", kp=0.04, ki=0.01, bias=_BIAS3 + _BIAS3, q0=_Q0,
                            p0=(1 / 3, 1 / 3, 1 / 3), alpha=0.04, beta=100.0),
    "so3-crossed-pi": dict(group="so3", controller="crossed_pi", kp=0.04, ki=0.01, bias=_BIAS3,
                           bias_frame="right", q0=_Q0, alpha=0.04, beta=100.0),
}
# se3-p-vs-pi: unbiased P reference, biased P, biased PI
COMPARISONS = {
    "se3-p-vs-pi": [
        ("p_nobias", dict(controller="p", bias=(0.0,) * 6)),
        ("p", dict(controller="p")),
        ("pi", dict(controller="pi")),
    ],
}
_COMPARISON_BASE = {"se3-p-vs-pi": "se3-first-order"}
_COMPARISON_SUBJECT = {"se3-p-vs-pi": "pi"}


def reproduction_names() -> list[str]:
    return sorted(list(REPRODUCTIONS) + list(COMPARISONS))


def reproduction_specs(name: str, overrides: dict | None = None) -> list[tuple[str, RunSpec]]:
    """Named study -> [(label, spec)]; ``overrides`` apply to every run."""
    overrides = dict(overrides or {})
    if name in REPRODUCTIONS:
        return [(name, build_spec({**REPRODUCTIONS[name], **overrides}))]
    if name in COMPARISONS:
        base = REPRODUCTIONS[_COMPARISON_BASE[name]]
        return [(f"{name}_{label}", build_spec({**base, **change, **overrides}))
                for label, change in COMPARISONS[name]]
    raise ConfigError(f"unknown reproduction {name!r}; choose from {', '.join(reproduction_names())}")


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _num(x: float) -> str:
    return format(float(x), ".16e")


def csv_header(d: int) -> list[str]:
    return ["t", "phi", "V", "grad_norm", "xi_norm"] + [f"integral_{i}" for i in range(1, d + 1)] + ["residual_norm"]


def write_csv(trajectory: Trajectory, path: str | Path) -> None:
    d = trajectory.integral.shape[1]
    second = trajectory.xi is not None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(d))
        for k in range(len(trajectory.t)):
            w.writerow(
                [_num(trajectory.t[k]), _num(trajectory.phi[k]), _num(trajectory.V[k]),
                 _num(trajectory.grad_norm[k]), _num(trajectory.xi_norm[k]) if second else ""]
                + [_num(v) for v in trajectory.integral[k]]
                + [_num(trajectory.residual[k])]
            )


def summary_dict(spec: RunSpec, report: ConvergenceReport) -> dict:
    out = report.as_dict()
    out["config"] = spec.as_dict()
    return out


def write_summary(spec: RunSpec, report: ConvergenceReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary_dict(spec, report), fh, indent=2, default=list)
        fh.write("\n")


def _resolve(path: str | None, default: Path, base: Path) -> Path:
    if path is None:
        return default
    p = Path(path)
    return p if p.is_absolute() else base / p


def run_experiment(spec: RunSpec, csv_path: str | Path | None = None,
                   summary_path: str | Path | None = None) -> tuple[Trajectory, ConvergenceReport]:
    """Simulate ``spec``; write CSV/summary when paths are given."""
    trajectory = simulate(spec.to_sim_config())
    report = convergence_report(trajectory)
    if csv_path is not None:
        write_csv(trajectory, csv_path)
    if summary_path is not None:
        write_summary(spec, report, summary_path)
    return trajectory, report


def _run_to_files(spec: RunSpec, csv_path: Path, summary_path: Path, label: str) -> int:
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    summary_path.parent.mkdir(parents=True, exist_ok=True)
    try:
        _, report = run_experiment(spec, csv_path, summary_path)
    except SimulationAborted as exc:
        print(f"{label}: simulation aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    status = "converged" if report.converged else "NOT converged"
    print(f"{label}: {status}  phi={report.final_phi:.3e}  residual={report.final_residual:.3e}  "
          f"max dV/step={report.max_step_rise:.3e}  -> {csv_path}")
    for note in report.diagnostics:
        print(f"{label}: note: {note}")
    return EXIT_OK if report.converged else EXIT_UNMET


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _outputs_for(spec: RunSpec, config_path: Path) -> tuple[Path, Path]:
    base = config_path.parent
    stem = config_path.stem
    return (_resolve(spec.output_csv, base / f"{stem}.csv", base),
            _resolve(spec.output_summary, base / f"{stem}.summary.json", base))


def cmd_run(args) -> int:
    path = Path(args.config)
    spec = load_config(path)
    csv_path, summary_path = _outputs_for(spec, path)
    return _run_to_files(spec, csv_path, summary_path, path.stem)


def cmd_validate(args) -> int:
    spec = load_config(args.config)
    sys.stdout.write(serialize_config(spec))
    return EXIT_OK


def _overrides(args) -> dict:
    out = {}
    if args.controller is not None:
        out["controller"] = args.controller
    if args.dt is not None:
        out["dt"] = args.dt
    if args.t_final is not None:
        out["t_final"] = args.t_final
    if args.integrator is not None:
        out["integrator"] = args.integrator
    if args.record_stride is not None:
        out["record_stride"] = args.record_stride
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        out[key] = convert_value(key.lower(), value)
    return out


def cmd_reproduce(args) -> int:
    runs = reproduction_specs(args.name, _overrides(args))
    out_dir = Path(args.out_dir)
    codes = {}
    for label, spec in runs:
        csv_path = _resolve(spec.output_csv, out_dir / f"{label}.csv", out_dir)
        summary_path = _resolve(spec.output_summary, out_dir / f"{label}.summary.json", out_dir)
        codes[label] = _run_to_files(spec, csv_path, summary_path, label)
    if any(c == EXIT_ABORTED for c in codes.values()):
        return EXIT_ABORTED
    subject = _COMPARISON_SUBJECT.get(args.name)
    if subject is not None:
        # the P runs are references that are not expected to reject the bias
        return codes[f"{args.name}_{subject}"]
    return max(codes.values())


def cmd_check_gains(args) -> int:
    try:
        interval = feasible_beta_interval(args.kd, args.ki, args.gamma)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    delta = args.kd ** 2 - args.ki * args.kd
    print(f"k_d={args.kd!r} k_i={args.ki!r} gamma={args.gamma!r}  Delta=k_d^2-k_i*k_d={delta:.6g}")
    if interval.empty:
        print("feasible beta interval: empty (requires k_i < k_d)")
        return EXIT_UNMET
    print(f"feasible beta interval: ({interval.low:.6g}, {interval.high:.6g})")
    mid = interval.geometric_mid()
    line = f"default beta (geometric middle): {mid:.6g}"
    if args.kp is not None:
        line += f"  alpha = beta*k_p = {mid * args.kp:.6g}"
    print(line)
    ok = True
    for beta in args.beta or [REFERENCE_BETA]:
        inside = beta in interval
        ok = ok and inside
        print(f"beta={beta!r}: {'inside' if inside else 'OUTSIDE'}")
    return EXIT_OK if ok else EXIT_UNMET


def _sweep_one(path: str) -> tuple[str, int, str]:
    p = Path(path)
    try:
        spec = load_config(p)
        csv_path, summary_path = _outputs_for(spec, p)
        return path, _run_to_files(spec, csv_path, summary_path, p.stem), ""
    except ConfigError as exc:
        return path, EXIT_USAGE, str(exc)
    except OSError as exc:
        return path, EXIT_USAGE, f"{exc.filename}: {exc.strerror}"


def cmd_sweep(args) -> int:
    paths = sorted(str(p) for p in Path(args.config_dir).glob("*.cfg"))
    if not paths:
        print(f"no *.cfg files in {args.config_dir}", file=sys.stderr)
        return EXIT_USAGE
    workers = args.jobs or min(len(paths), os.cpu_count() or 1)
    if workers == 1:
        results = [_sweep_one(p) for p in paths]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, paths))
    for path, code, err in results:
        if err:
            print(f"{path}: {err}", file=sys.stderr)
    codes = [c for _, c, _ in results]
    for worst in (EXIT_USAGE, EXIT_ABORTED, EXIT_UNMET):
        if worst in codes:
            return worst
    return EXIT_OK


def _float(text: str) -> float:
    try:
        return parse_number(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="liepid", description="PID control with integral action on SO(3)/SE(3).")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one config file")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="parse a config and print it with defaults filled in")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("reproduce", help="run a named study")
    p.add_argument("name", choices=reproduction_names())
    p.add_argument("--controller")
    p.add_argument("--dt", type=_float)
    p.add_argument("--t-final", type=_float)
    p.add_argument("--integrator", choices=["lie_euler", "rkmk4"])
    p.add_argument("--record-stride", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    p.add_argument("--out-dir", default="runs")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("check-gains", help="feasible beta-interval for second-order PID")
    p.add_argument("--kp", type=_float)
    p.add_argument("--ki", type=_float, required=True)
    p.add_argument("--kd", type=_float, required=True)
    p.add_argument("--gamma", type=_float, default=1.0)
    p.add_argument("--beta", type=_float, action="append", help=f"beta to test (default {REFERENCE_BETA})")
    p.set_defaults(func=cmd_check_gains)

    p = sub.add_parser("sweep", help="run every *.cfg in a directory concurrently")
    p.add_argument("config_dir")
    p.add_argument("-j", "--jobs", type=int)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationAborted as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    except OSError as exc:
        print(f"error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
