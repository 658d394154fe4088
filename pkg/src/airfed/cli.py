"""Command-line entry point: ``airfed run`` and ``airfed sweep``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from airfed.config import ConfigError, SimConfig, load_config
from airfed.trainer import run

log = logging.getLogger("airfed")


def _bias_tag(c: float) -> str:
    return format(c, "g").replace(".", "p")


def sweep_path(base: str | Path, c: float) -> Path:
    base = Path(base)
    return base.with_name(f"{base.stem}_C{_bias_tag(c)}{base.suffix or '.csv'}")


def _parse_factors(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty bias-factor list")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="airfed", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one configuration")
    p_run.add_argument("--config", required=True, type=Path)
    p_run.add_argument("--policy", choices=("fedavg", "afl", "ca_afl", "greedy_topk"))
    p_run.add_argument("--bias-factor", type=float)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out", type=Path)

    p_sweep = sub.add_parser("sweep", help="one run per bias factor, one output file each")
    p_sweep.add_argument("--config", required=True, type=Path)
    p_sweep.add_argument("--bias-factors", required=True, type=_parse_factors)
    p_sweep.add_argument("--policy", choices=("fedavg", "afl", "ca_afl", "greedy_topk"))
    p_sweep.add_argument("--seed", type=int)
    p_sweep.add_argument("--out", type=Path, help="base path; _C<value> is appended per run")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    changes = {}
    if args.policy is not None:
        changes["policy"] = args.policy
    if getattr(args, "bias_factor", None) is not None:
        changes["bias_factor"] = args.bias_factor
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output_path"] = str(args.out)
    return changes


def _summary(cfg: SimConfig, history) -> str:
    if not history:
        return f"{cfg.output_path}: 0 rounds"
    last = history[-1]
    return (
        f"{cfg.output_path}: policy={cfg.policy} C={cfg.bias_factor:g} "
        f"avg={last.avg_accuracy:.4f} worst={last.worst_accuracy:.4f} "
        f"std={last.accuracy_std:.4f} energy={last.cumulative_energy_j:.6g} J"
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config).replace(**_overrides(args))
    except (ConfigError, OSError) as exc:
        print(f"airfed: {exc}", file=sys.stderr)
        return 2

    if args.command == "run":
        jobs = [cfg]
    else:
        try:
            jobs = [
                cfg.replace(bias_factor=c, output_path=str(sweep_path(cfg.output_path, c)))
                for c in args.bias_factors
            ]
        except ConfigError as exc:
            print(f"airfed: {exc}", file=sys.stderr)
            return 2

    for job in jobs:
        try:
            history = run(job, out=job.output_path)
        except (ValueError, OSError) as exc:
            # bad data files and model_dim mismatches surface here
            print(f"airfed: {exc}", file=sys.stderr)
            return 2
        print(_summary(job, history))
    return 0


if __name__ == "__main__":
    sys.exit(main())
