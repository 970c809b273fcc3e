"""Command-line interface.

Every run echoes its full effective configuration in the output so results
can be replayed exactly.  Reports serialize as JSON (floats at full
round-trip precision); ladder experiments and sampled paths can emit CSV.
By default the wall_time field is zeroed so identical configurations give
byte-identical output; pass --timing to record real durations.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import IO

from .errors import QouError
from .experiments import (
    ExperimentReport,
    margin_mass_asymptotics,
    mc_double_jump,
    mc_jump_probability,
    mc_poisson_limit,
    mixing_decay,
    quadrature_jump_rate,
    verify_kernel_bounds,
    verify_small_rho_expansions,
)
from .jumps import JumpSpec, count_events
from .qseries import DEFAULT_SERIES, QParams, SeriesConfig, alpha_q
from .density import TransitionQuery, marginal_pdf, transition_pdf
from .sampler import RngSeed, build_transition_table, simulate_path

__all__ = ["main", "run"]


def _q_value(text: str) -> float:
    try:
        q = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"q must be a real number, got {text!r}") from exc
    if not (-1.0 < q < 1.0):
        raise argparse.ArgumentTypeError(
            f"q must lie strictly inside the open interval (-1, 1), got {q}"
        )
    return q


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}") from exc


def _default_threads() -> int:
    env = os.environ.get("QOU_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qou",
        description="q-Ornstein-Uhlenbeck process: densities, sampling, and "
        "boundary-crossing experiments",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument(
        "--format", choices=("json", "csv"), default=None,
        help="output format (default: json; sample-path defaults to csv)",
    )
    common.add_argument("--timing", action="store_true", help="include real wall times in reports")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(name: str, **kwargs):
        return sub.add_parser(name, parents=[common], **kwargs)

    p = add_parser("alpha", help="limiting crossing rate alpha_q")
    p.add_argument("--q", type=_q_value, required=True)
    p.add_argument("--tol", type=float, default=DEFAULT_SERIES.tol)

    p = add_parser("density", help="stationary density at a point")
    p.add_argument("--q", type=_q_value, required=True)
    p.add_argument("--x", type=float, required=True)

    p = add_parser("transition", help="transition density p_{0,t}(x, y)")
    p.add_argument("--q", type=_q_value, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--y", type=float, required=True)

    p = add_parser("sample-path", help="simulate a dyadic-grid trajectory")
    p.add_argument("--q", type=_q_value, required=True)
    p.add_argument("--n", type=int, required=True, help="dyadic resolution: step 2^-n")
    p.add_argument("--horizon", type=int, required=True, help="unit time intervals")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--nx", type=int, default=512, help="table source-state grid size")
    p.add_argument("--nu", type=int, default=1024, help="table probability grid size")

    p = add_parser("count-jumps", help="simulate and count margin crossings")
    p.add_argument("--q", type=_q_value, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--window", type=int, nargs=2, default=None, metavar=("A", "B"))
    p.add_argument("--nx", type=int, default=512)
    p.add_argument("--nu", type=int, default=1024)

    p = add_parser("experiment", help="run a named experiment")
    p.add_argument(
        "name",
        choices=(
            "rate", "margin", "jump-mc", "poisson", "double-jump",
            "bounds", "expansions", "mixing",
        ),
    )
    p.add_argument("--q", type=_q_value, required=True)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--epsilon-list", type=_float_list, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--scale-lambda", type=float, default=None,
                   help="target mean crossing count; window calibrated from the quadrature rate")
    p.add_argument("--window-scale", type=float, default=None,
                   help="window length in units of 1/epsilon^3")
    p.add_argument("--delta-list", type=_float_list, default=(0.1, 0.5, 1.0, 4.0))
    p.add_argument("--t-list", type=_float_list, default=(1.0, 2.0, 4.0, 8.0))
    p.add_argument("--rho-list", type=_float_list, default=(0.05, 0.01, 0.001))
    p.add_argument("--grid-size", type=int, default=128)
    p.add_argument("--step-cap", type=float, default=2e10)
    p.add_argument("--table-doubling-check", action="store_true")
    return parser


def _report_dict(report: ExperimentReport, timing: bool) -> dict:
    d = report.to_json_dict()
    if not timing:
        d["wall_time"] = 0.0
    return d


def _write(out: IO[str], text: str) -> None:
    out.write(text)
    if not text.endswith("\n"):
        out.write("\n")


def _run_experiment(args, out: IO[str]) -> None:
    qp = QParams(args.q)
    threads = args.threads if args.threads is not None else _default_threads()
    name = args.name

    def need(flag: str):
        v = getattr(args, flag.replace("-", "_"))
        if v is None:
            raise SystemExit2(f"experiment {name!r} requires --{flag}")
        return v

    if name == "rate":
        eps_list = args.epsilon_list or ((args.epsilon,) if args.epsilon else None)
        if not eps_list:
            raise SystemExit2("experiment 'rate' requires --epsilon or --epsilon-list")
        reports = [quadrature_jump_rate(qp, e) for e in eps_list]
        if args.format == "csv":
            _write(out, "epsilon,value,stderr\n" + "\n".join(
                f"{e!r},{r.estimates['ratio_to_alpha'].value!r},"
                f"{r.estimates['ratio_to_alpha'].stderr!r}"
                for e, r in zip(eps_list, reports)
            ))
        else:
            payload = [_report_dict(r, args.timing) for r in reports]
            _write(out, json.dumps(payload[0] if len(payload) == 1 else payload, indent=2))
    elif name == "margin":
        eps_list = args.epsilon_list or ((args.epsilon,) if args.epsilon else None)
        if not eps_list:
            raise SystemExit2("experiment 'margin' requires --epsilon or --epsilon-list")
        report = margin_mass_asymptotics(qp, eps_list)
        if args.format == "csv":
            rows = ["epsilon,value,stderr"]
            for e in sorted(eps_list, reverse=True):
                est = report.estimates[f"ratio[{e:g}]"]
                rows.append(f"{e!r},{est.value!r},{est.stderr!r}")
            _write(out, "\n".join(rows))
        else:
            _write(out, json.dumps(_report_dict(report, args.timing), indent=2))
    elif name == "jump-mc":
        report = mc_jump_probability(
            qp, need("epsilon"), need("n"), need("replicates"), args.seed,
            threads=threads, step_cap=args.step_cap,
            table_doubling_check=args.table_doubling_check,
        )
        _write(out, json.dumps(_report_dict(report, args.timing), indent=2))
    elif name == "poisson":
        eps = need("epsilon")
        if (args.scale_lambda is None) == (args.window_scale is None):
            raise SystemExit2(
                "experiment 'poisson' requires exactly one of --scale-lambda / --window-scale"
            )
        if args.window_scale is not None:
            scale = args.window_scale
        else:
            rate = quadrature_jump_rate(qp, eps)
            scale = args.scale_lambda * eps**3 / rate.estimates["F"].value
        report = mc_poisson_limit(
            qp, eps, need("n"), scale, need("replicates"), args.seed,
            threads=threads, step_cap=args.step_cap,
        )
        if args.scale_lambda is not None:
            report.config["scale_lambda_target"] = args.scale_lambda
        _write(out, json.dumps(_report_dict(report, args.timing), indent=2))
    elif name == "double-jump":
        report = mc_double_jump(
            qp, need("epsilon"), need("n"), need("replicates"), args.seed,
            threads=threads, step_cap=args.step_cap,
        )
        _write(out, json.dumps(_report_dict(report, args.timing), indent=2))
    elif name == "bounds":
        report = verify_kernel_bounds(qp, args.delta_list, args.grid_size)
        _write(out, json.dumps(_report_dict(report, args.timing), indent=2))
    elif name == "expansions":
        report = verify_small_rho_expansions(qp, args.rho_list)
        _write(out, json.dumps(_report_dict(report, args.timing), indent=2))
    elif name == "mixing":
        report = mixing_decay(qp, args.t_list, args.grid_size)
        _write(out, json.dumps(_report_dict(report, args.timing), indent=2))


class SystemExit2(Exception):
    """Argument-level error discovered after parsing."""


def run(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0

    out = sys.stdout
    close = False
    try:
        if args.out:
            out = open(args.out, "w")
            close = True
        if args.command == "alpha":
            qp = QParams(args.q)
            value = alpha_q(qp, SeriesConfig(tol=args.tol, max_terms=DEFAULT_SERIES.max_terms))
            _write(out, json.dumps(
                {"command": "alpha", "config": {"q": args.q, "tol": args.tol}, "alpha_q": value}
            ))
        elif args.command == "density":
            qp = QParams(args.q)
            value = float(marginal_pdf(qp, args.x))
            _write(out, json.dumps(
                {"command": "density", "config": {"q": args.q, "x": args.x}, "value": value}
            ))
        elif args.command == "transition":
            qp = QParams(args.q)
            value = transition_pdf(qp, TransitionQuery(args.t, args.x, args.y))
            _write(out, json.dumps({
                "command": "transition",
                "config": {"q": args.q, "t": args.t, "x": args.x, "y": args.y},
                "value": value,
            }))
        elif args.command == "sample-path":
            qp = QParams(args.q)
            table = build_transition_table(qp, args.n, nx=args.nx, nu=args.nu)
            path = simulate_path(qp, args.n, args.horizon, RngSeed(args.seed, args.stream), table)
            if (args.format or "csv") == "csv":
                path.write_csv(out)
            else:
                _write(out, json.dumps({
                    "command": "sample-path",
                    "config": {"q": args.q, "n": args.n, "horizon": args.horizon,
                               "seed": args.seed, "stream": args.stream},
                    "values": [float(v) for v in path.values],
                }))
        elif args.command == "count-jumps":
            qp = QParams(args.q)
            window = tuple(args.window) if args.window else (0, args.horizon)
            table = build_transition_table(qp, args.n, nx=args.nx, nu=args.nu)
            path = simulate_path(qp, args.n, args.horizon, RngSeed(args.seed, args.stream), table)
            count = count_events(path, JumpSpec(qp=qp, epsilon=args.epsilon, window=window))
            _write(out, count.to_json())
        elif args.command == "experiment":
            _run_experiment(args, out)
        return 0
    except SystemExit2 as exc:
        print(f"qou: error: {exc}", file=sys.stderr)
        return 2
    except (QouError, ValueError) as exc:
        op = type(exc).__name__
        print(f"qou: computation failed ({op}): {exc}", file=sys.stderr)
        return 1
    finally:
        if close:
            out.close()


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
