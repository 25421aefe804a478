"""Command line front door: ``fedmade run|validate|compare``."""
import argparse
import logging
import sys

from . import config as C
from .errors import FedMadeError


def _cmd_validate(args):
    cfg = C.parse_config(args.config)
    print(f"ok: {cfg.run_name} ({cfg.algorithm}, {cfg.rounds} rounds, gamma={cfg.sampling_rate})")
    return 0


def _cmd_run(args):
    from .federation import run_experiment

    cfg = C.parse_config(args.config)
    if args.out:
        cfg = cfg.replace(output_dir=args.out)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if not cfg.output_dir:
        cfg = cfg.replace(output_dir=f"runs/{cfg.run_name}")
    report = run_experiment(cfg)
    if report.final:
        pc = ", ".join(f"{n}={a:.3f}" for n, a in zip(report.class_names, report.final["per_class_accuracy"]))
        print(f"{cfg.run_name}: best round {report.best_round}, test accuracy {report.final['accuracy']:.4f}")
        print(f"  per-class: {pc}")
        print(f"  mean round duration: {report.mean_round_duration:.3f}s")
    print(f"report written to {cfg.output_dir}")
    if report.aborted:
        print(f"aborted: {report.error}", file=sys.stderr)
        return 4
    return 0


def _cmd_compare(args):
    from .report import compare_runs, comparison_csv

    table = compare_runs(args.reports, args.baseline)
    text = comparison_csv(table)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedmade", description="Federated IDS aggregation simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log every round")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides output_dir)")
    r.add_argument("--seed", type=int, help="override the top-level seed")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)

    c = sub.add_parser("compare", help="compare reports against a baseline run")
    c.add_argument("reports", nargs="+", help="report.json files or run directories")
    c.add_argument("--baseline", required=True, help="run name to compare against")
    c.add_argument("--out", help="also write the table as CSV")
    c.set_defaults(func=_cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FedMadeError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
