"""Command-line interface: ``noisyis {estimate,variance,experiment,proposal-curve}``.

Every invocation prints its resolved configuration as one ``#``-prefixed JSON
line (on stdout, or stderr when the data itself goes to stdout), so each
output can be traced back to its seed. A
JSON file passed with ``--config`` supplies defaults; explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .errors import NoisyISError
from .estimators import estimate_i_self, fmt, replicate, run_noisy_is, write_csv
from .experiments import (
    DEFAULT_A_GRID,
    KINDS,
    RATIO_COLUMNS,
    ExperimentConfig,
    emit_proposal_curves,
    optimal_proposal,
    run_experiment,
    write_proposal_curves,
)
from .models import (
    constant_fn,
    identity_function,
    make_bernoulli_noise,
    make_folded_gaussian_noise,
    make_latent_variable_noise,
    make_multiplicative_lognormal_noise,
    one_and_x_function,
)
from .proposals import (
    DEFAULT_GRID,
    optimal_proposal_for_self,
    optimal_proposal_for_std,
    optimal_proposal_for_z,
    target_proposal,
)
from .rng import replication_seed, stream
from .variance import DEFAULT_NODES, variance_report, z_bar

NOISES = ("bernoulli", "folded-gaussian", "multiplicative", "latent")
PROPOSALS = ("target", "optimal-z", "optimal-std", "optimal-self")
FUNCTIONS = {"x": identity_function, "1,x": one_and_x_function}


def _a_list(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid A list {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("A list is empty")
    bad = [v for v in values if not v > 0]
    if bad:
        raise argparse.ArgumentTypeError(f"constraint A > 0 violated by A={bad[0]:g}")
    return values


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="noisyis", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)

    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=_seed, default=1)
    shared.add_argument("--out", default=None, help="output path (default: stdout)")
    shared.add_argument("--format", choices=("csv", "json"), default="csv")
    shared.add_argument("--config", default=None, help="JSON file of default flag values")
    shared.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)

    problem = argparse.ArgumentParser(add_help=False)
    problem.add_argument("--kind", choices=KINDS, default="uniform")
    problem.add_argument("--a", type=float, default=0.1)
    problem.add_argument("--b", type=float, default=10.0)
    problem.add_argument("--trunc", type=float, default=12.0)
    problem.add_argument("--grid-nodes", type=_positive_int, default=DEFAULT_GRID)
    problem.add_argument("--quad-nodes", type=_positive_int, default=DEFAULT_NODES)
    problem.add_argument("--alt-closed-form", action="store_true",
                         help="use the shape p(x)exp(sigma(x)^2) instead of sqrt(m^2+s^2)")

    p_exp = subs.add_parser("experiment", parents=[shared, problem],
                            help="theoretical and empirical variance-ratio curve")
    p_exp.add_argument("--A", type=_a_list, default=DEFAULT_A_GRID)
    p_exp.add_argument("--N", type=_positive_int, default=100)
    p_exp.add_argument("--M", type=_positive_int, default=5000)
    p_exp.add_argument("--theory-only", action="store_true")

    p_curve = subs.add_parser("proposal-curve", parents=[shared, problem],
                              help="optimal proposal and noise standard deviation curves")
    p_curve.add_argument("--A", type=_a_list, default=DEFAULT_A_GRID)
    p_curve.add_argument("--points", type=_positive_int, default=1000)

    p_var = subs.add_parser("variance", parents=[shared, problem],
                            help="theoretical variances of Z_hat per noise level")
    p_var.add_argument("--A", type=_a_list, default=DEFAULT_A_GRID)
    p_var.add_argument("--N", type=_positive_int, default=100)
    p_var.add_argument("--proposal", choices=("target", "optimal-z"), default="optimal-z")

    p_est = subs.add_parser("estimate", parents=[shared, problem],
                            help="replicated noisy IS estimates")
    p_est.add_argument("--noise", choices=NOISES, default="multiplicative")
    p_est.add_argument("--A", type=float, default=0.6, help="multiplicative noise level")
    p_est.add_argument("--sigma", type=float, default=0.05, help="folded-gaussian sigma")
    p_est.add_argument("--p-max", type=float, default=None,
                       help="bernoulli bound (default: max of the target)")
    p_est.add_argument("--gamma-sq", type=float, default=1.0, help="latent-variable gamma^2")
    p_est.add_argument("--R", type=_positive_int, default=1, help="latent-variable R")
    p_est.add_argument("--proposal", choices=PROPOSALS, default="target")
    p_est.add_argument("--f", choices=tuple(FUNCTIONS), default="x")
    p_est.add_argument("--N", type=_positive_int, default=100)
    p_est.add_argument("--M", type=_positive_int, default=1000)
    p_est.add_argument("--pilot-N", type=_positive_int, default=1000,
                       help="pilot sample size for the optimal-self proposal")

    return parser, {"experiment": p_exp, "proposal-curve": p_curve,
                    "variance": p_var, "estimate": p_est}


def parse_args(argv):
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                defaults = json.load(fh)
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read --config {args.config}: {exc}")
        if not isinstance(defaults, dict):
            parser.error("--config must hold a JSON object")
        sub = subparsers[args.command]
        sub.set_defaults(**_coerce_config(sub, defaults))
        args = parser.parse_args(argv)
    return parser, subparsers, args


def _coerce_config(sub, defaults: dict) -> dict:
    """Run config values through the same converters as the matching flags."""
    actions = {a.dest: a for a in sub._actions}
    unknown = sorted(set(defaults) - set(actions))
    if unknown:
        sub.error(f"unknown keys in --config: {', '.join(unknown)}")
    out = {}
    for key, value in defaults.items():
        convert = actions[key].type
        if convert is None or value is None:
            out[key] = value
        else:
            text = ",".join(map(str, value)) if isinstance(value, list) else str(value)
            try:
                out[key] = convert(text)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                sub.error(f"--config key {key!r}: {exc}")
        choices = actions[key].choices
        if choices is not None and out[key] not in choices:
            sub.error(f"--config key {key!r}: invalid choice {value!r}")
    return out


def _experiment_config(args, A_grid) -> ExperimentConfig:
    return ExperimentConfig(
        kind=args.kind, a=args.a, b=args.b, trunc=args.trunc, A_grid=A_grid,
        N=getattr(args, "N", 100), M=getattr(args, "M", 5000), base_seed=args.seed,
        grid_nodes=args.grid_nodes, quad_nodes=args.quad_nodes,
        closed_form=args.alt_closed_form, threads=args.threads,
    )


def _resolved(args) -> dict:
    d = {k: v for k, v in vars(args).items() if k not in ("threads", "out", "config")}
    if isinstance(d.get("A"), tuple):
        d["A"] = list(d["A"])
    return d


def _emit_json(path, payload) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)


def _emit_csv(path, header, rows) -> None:
    if path is None:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    else:
        write_csv(path, header, rows)


def cmd_experiment(args, config):
    cfg = _experiment_config(args, args.A)
    curve = run_experiment(cfg, empirical=not args.theory_only)
    if args.format == "json":
        payload = curve.summary()
        payload["invocation"] = config
        _emit_json(args.out, payload)
    else:
        _emit_csv(args.out, RATIO_COLUMNS, [p.row() for p in curve.points])


def cmd_proposal_curve(args, config):
    cfg = _experiment_config(args, args.A)
    header, table = emit_proposal_curves(cfg, args.A, n=args.points)
    if args.format == "json":
        _emit_json(args.out, {"invocation": config, "columns": header,
                              "rows": [[float(v) for v in row] for row in table]})
    elif args.out is None:
        _emit_csv(None, header, [[fmt(v) for v in row] for row in table])
    else:
        write_proposal_curves(args.out, header, table)


def cmd_variance(args, config):
    cfg = _experiment_config(args, args.A)
    spec = cfg.quad_spec()
    header = ["experiment", "A", "N", "z_bar", "v_q", "v_min", "v_sub_opt", "ratio"]
    rows, records = [], []
    for A in cfg.A_grid:
        noise = cfg.noise(A)
        q = (optimal_proposal(cfg, A) if args.proposal == "optimal-z"
             else target_proposal(noise, G=cfg.grid_nodes))
        rep = variance_report(noise, q, args.N, spec)
        records.append({"experiment": cfg.kind, "A": A, **rep.as_dict()})
        rows.append([cfg.kind, fmt(A), str(args.N), fmt(rep.z_bar), fmt(rep.v_q),
                     fmt(rep.v_min), fmt(rep.v_sub_opt), fmt(rep.ratio)])
    if args.format == "json":
        _emit_json(args.out, {"invocation": config, "rows": records})
    else:
        _emit_csv(args.out, header, rows)


def build_noise(args, target):
    if args.noise == "bernoulli":
        p_max = args.p_max
        if p_max is None:
            lo, hi = target.support
            p_max = float(np.max(target(np.linspace(lo, hi, 100001))))
        return make_bernoulli_noise(target, p_max)
    if args.noise == "folded-gaussian":
        return make_folded_gaussian_noise(target, args.sigma)
    if args.noise == "latent":
        return make_latent_variable_noise(target, constant_fn(args.gamma_sq), args.R)
    cfg = _experiment_config(args, (args.A,))
    return make_multiplicative_lognormal_noise(target, cfg.sigma_fn(args.A))


def build_proposal(args, noise, f):
    G = args.grid_nodes
    if args.proposal == "target":
        return target_proposal(noise, G=G)
    if args.proposal == "optimal-z":
        return optimal_proposal_for_z(noise, G=G)
    if args.proposal == "optimal-std":
        return optimal_proposal_for_std(noise, f, G=G)
    # pilot run on the stream just past the last replication
    pilot_seed = replication_seed(args.seed, args.M)
    pilot = run_noisy_is(noise, optimal_proposal_for_z(noise, G=G), args.pilot_N, stream(pilot_seed))
    return optimal_proposal_for_self(noise, f, estimate_i_self(pilot, f), G=G)


def cmd_estimate(args, config):
    if args.M < 2:
        raise NoisyISError("cli: --M must be >= 2")
    cfg = _experiment_config(args, (1.0,))
    target = cfg.target()
    noise = build_noise(args, target)
    f = FUNCTIONS[args.f]()
    q = build_proposal(args, noise, f)
    zb = z_bar(noise, cfg.quad_spec())
    summary = replicate(noise, q, f, args.N, args.M, args.seed, z_bar=zb, threads=args.threads)
    if args.format == "json":
        payload = summary.summary()
        payload.update({"invocation": config, "z_bar": zb, "proposal": q.name})
        _emit_json(args.out, payload)
    else:
        header, rows = summary.csv_rows()
        _emit_csv(args.out, header, rows)


COMMANDS = {
    "experiment": cmd_experiment,
    "proposal-curve": cmd_proposal_curve,
    "variance": cmd_variance,
    "estimate": cmd_estimate,
}


def main(argv=None) -> int:
    try:
        parser, subparsers, args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    config = _resolved(args)
    try:
        if args.command == "experiment":
            ExperimentConfig(kind=args.kind, a=args.a, b=args.b, trunc=args.trunc, A_grid=args.A,
                             N=args.N, M=args.M)
    except NoisyISError as exc:
        subparsers[args.command].print_usage(sys.stderr)
        print(f"noisyis {args.command}: error: {exc}", file=sys.stderr)
        return 2
    # stdout carries the data itself when --out is absent
    header_stream = sys.stdout if args.out is not None else sys.stderr
    print("# noisyis " + json.dumps(config, sort_keys=True), file=header_stream)
    try:
        COMMANDS[args.command](args, config)
    except NoisyISError as exc:
        print(f"noisyis: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
