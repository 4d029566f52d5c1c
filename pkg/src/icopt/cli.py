"""Command line interface.

Subcommands: ``verify`` (property suite), ``run``/``sweep`` (experiments to
CSV), ``separation`` (adaptive vs nonadaptive block scheme), ``mi-check``
(exact information bound on tiny instances).  Exit codes: 0 all checks
passed, 1 a check failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .analysis import brute_force_avg_mi, oblivious_mi_bound
from .channels import Oblivious
from .harness import (ConfigError, ExperimentConfig, config_from_dict,
                      load_config, run_experiment, verify_suite, write_csv)

__all__ = ["main"]


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=None,
                        help="base seed (overrides the config)")
    parser.add_argument("--out", default=None, help="CSV output path")
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel trial workers")


def _add_overrides(parser):
    parser.add_argument("--d", type=int, nargs="+", default=None)
    parser.add_argument("--T", type=int, nargs="+", default=None)
    parser.add_argument("--eps", type=float, nargs="+", default=None)
    parser.add_argument("--r", type=int, nargs="+", default=None)
    parser.add_argument("--s", type=int, default=None)
    parser.add_argument("--delta", type=float, default=None)
    parser.add_argument("--trials", type=int, default=None)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icopt",
        description="Stochastic optimization under local information "
                    "constraints: experiments and checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the deterministic property suite")
    p.add_argument("--seed", type=int, default=0)

    for name in ("run", "sweep"):
        p = sub.add_parser(name, help="execute a configured experiment")
        p.add_argument("--config", required=True)
        _add_common(p)
        _add_overrides(p)

    p = sub.add_parser("separation",
                       help="adaptive vs nonadaptive block-sparse baseline")
    p.add_argument("--config", default=None)
    _add_common(p)
    _add_overrides(p)

    p = sub.add_parser("mi-check",
                       help="exact information bound on a tiny instance")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--channel", choices=("uniform", "skewed"),
                   default="uniform")
    return parser


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    data = {f: getattr(config, f)
            for f in ExperimentConfig.__dataclass_fields__}
    if args.d is not None:
        data["d_grid"] = tuple(args.d)
    if args.T is not None:
        data["T_grid"] = tuple(args.T)
    if args.eps is not None:
        data["eps_grid"] = tuple(args.eps)
    if args.r is not None:
        data["r_grid"] = tuple(args.r)
    for name in ("s", "delta", "trials", "seed"):
        if getattr(args, name, None) is not None:
            data[name] = getattr(args, name)
    return config_from_dict(data)


def _cmd_verify(args) -> int:
    lines, ok = verify_suite(args.seed)
    for line in lines:
        print(line)
    return 0 if ok else 1


def _cmd_run(args) -> int:
    config = load_config(args.config)
    config = _apply_overrides(config, args)
    records = run_experiment(config, jobs=args.jobs)
    out = args.out
    if out is None:
        raise ConfigError("--out is required to write experiment CSV")
    write_csv(records, out)
    failed = sum(1 for r in records if r.final_error is None)
    print(f"wrote {len(records)} rows to {out}"
          + (f" ({failed} failed)" if failed else ""))
    return 1 if failed else 0


def _cmd_separation(args) -> int:
    if args.config is not None:
        config = load_config(args.config)
        config = _apply_overrides(config, args)
    else:
        missing = [k for k in ("d", "T", "s", "delta") if getattr(args, k) is None]
        if missing:
            raise ConfigError(f"separation needs {missing} (flags or --config)")
        config = config_from_dict({
            "kind": "separation",
            "experiment_id": "separation",
            "seed": args.seed if args.seed is not None else 0,
            "trials": args.trials if args.trials is not None else 100,
            "d": args.d, "T": args.T, "s": args.s, "delta": args.delta,
        })
    if config.kind != "separation":
        raise ConfigError("separation subcommand needs a separation config")
    records = run_experiment(config, jobs=args.jobs)
    if args.out is not None:
        write_csv(records, args.out)
    means = {}
    for rec in records:
        if rec.final_error is not None:
            means.setdefault(rec.algorithm, []).append(rec.final_error)
    for name in sorted(means):
        vals = means[name]
        print(f"{name}: mean_error={sum(vals) / len(vals)!r} over {len(vals)} trials")
    failed = sum(1 for r in records if r.final_error is None)
    return 1 if failed else 0


def _cmd_mi_check(args) -> int:
    if args.channel == "uniform":
        spec = Oblivious.uniform(args.d)
    else:
        weights = [float(i + 1) for i in range(args.d)]
        total = sum(weights)
        spec = Oblivious(args.d, p=tuple(w / total for w in weights))
    try:
        total_mi = brute_force_avg_mi(args.d, args.delta, (spec,) * args.T)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    bound = oblivious_mi_bound(args.delta, args.T)
    ok = total_mi <= bound + 1e-12
    print(f"sum_i I(V(i); Y^T) = {total_mi!r}")
    print(f"bound (C/2) T gamma^2 = {bound!r}")
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {
        "verify": _cmd_verify,
        "run": _cmd_run,
        "sweep": _cmd_run,
        "separation": _cmd_separation,
        "mi-check": _cmd_mi_check,
    }[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
