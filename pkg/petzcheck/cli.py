"""
Command-line interface.

Usage:
    petzcheck verify [--config harness.toml] [--trials N] [--seed S] [--out PATH]
                     [--format json|csv] [--families a,b] [--skip a,b] [--workers N]
    petzcheck replay --instance PATH
    petzcheck demo [--channel pinching|unitary|trace]

Exit status:
    0  every asserted check passed
    1  an asserted check failed, a trial errored, or a replayed instance is malformed
    2  configuration error
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

import petzcheck.config as Config
from petzcheck.algebra_core import AlgebraElement, ReferenceState, StateElement, TracialAlgebra
from petzcheck.channels import Channel, pinching_channel, trace_channel, unitary_channel
from petzcheck.exceptions import ConfigError, InstanceFormatError, PetzCheckError
from petzcheck.harness import DEFAULT_CONFIG_PATH, load_config, replay, run_suite, write_report
from petzcheck.logging_config import setup_logging
from petzcheck.recovery import RecoverySetup, chain_report, kl_recovery_gap

# ----------------------------
# Logger
# ----------------------------
logger = logging.getLogger(__name__)

DEMO_CHANNELS = ("pinching", "unitary", "trace")


# ----------------------------
# Demo
# ----------------------------
class DemoRow(NamedTuple):
    label: str
    value: float


def _demo_channel(name: str, algebra: TracialAlgebra) -> Channel:
    if name == "pinching":
        return pinching_channel(algebra)
    if name == "trace":
        return trace_channel(algebra)
    theta = np.pi / 5
    rotation = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    return unitary_channel(algebra, AlgebraElement(algebra, (rotation,)))


def demo(channel: str = "pinching") -> List[DemoRow]:
    """
    The recoverability chain on M₂ with τ = Tr/2, B = 1 and A = [[1, 1/2], [1/2, 1]].

    With the pinching channel every link between the entropy gap and the
    trace-norm residual saturates at 1/4.

    Args:
        channel (str): ``pinching``, ``unitary`` or ``trace``.

    Returns:
        List[DemoRow]: Labelled chain quantities.
    """
    if channel not in DEMO_CHANNELS:
        raise ValueError(f"Unknown demo channel {channel!r}; expected one of {DEMO_CHANNELS}")
    algebra = TracialAlgebra.full_matrix(2)
    B = ReferenceState.from_element(algebra.identity())
    A = StateElement(algebra, (np.array([[1.0, 0.5], [0.5, 1.0]]),))
    setup = RecoverySetup(_demo_channel(channel, algebra), B)
    report = chain_report(A, setup, check=True)
    return [
        DemoRow("S₂(A|B)", report.s2_src),
        DemoRow("S₂(φ(A)|φ(B))", report.s2_tgt),
        DemoRow("entropy gap", report.entropy_gap),
        DemoRow("AM residual²", report.am_residual_sq),
        DemoRow("ℓ¹ residual²", report.l1_residual_sq),
        DemoRow("fidelity F", report.fidelity),
        DemoRow("fidelity term 4(1−F)²", report.fidelity_term),
        DemoRow("log recovery gap", kl_recovery_gap(A, setup)),
    ]


def format_table(rows: Sequence[DemoRow]) -> str:
    width = max(len(r.label) for r in rows)
    lines = [f"{'quantity'.ljust(width)}  value", f"{'-' * width}  {'-' * 12}"]
    lines += [f"{r.label.ljust(width)}  {r.value:+.6f}" for r in rows]
    return "\n".join(lines)


# ----------------------------
# Argument parsing
# ----------------------------
def _csv_list(value: str) -> tuple:
    return tuple(item.strip() for item in value.split(",") if item.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="petzcheck",
        description="Randomized verification of Petz recovery and sandwiched-entropy inequalities.",
    )
    parser.add_argument("--log-level", default=None, help=f"Logging level (default: {Config.LOG_LEVEL})")
    sub = parser.add_subparsers(dest="command", required=True)

    verify = sub.add_parser("verify", help="Run the randomized check battery")
    verify.add_argument("--config", type=Path, default=DEFAULT_CONFIG_PATH, help="Harness TOML file")
    verify.add_argument("--trials", type=int, help="Trials per (algebra, family) cell")
    verify.add_argument("--seed", type=int, help="Master seed")
    verify.add_argument("--out", type=Path, help="Report path")
    verify.add_argument("--format", choices=("json", "csv"), help="Report format")
    verify.add_argument("--families", type=_csv_list, help="Comma-separated channel families")
    verify.add_argument("--skip", type=_csv_list, help="Comma-separated checks to skip")
    verify.add_argument("--workers", type=int, help="Worker processes")

    replay_cmd = sub.add_parser("replay", help="Re-evaluate a persisted trial instance")
    replay_cmd.add_argument("--instance", type=Path, required=True, help="Instance JSON file")

    demo_cmd = sub.add_parser("demo", help="Print the worked recoverability example")
    demo_cmd.add_argument("--channel", choices=DEMO_CHANNELS, default="pinching")
    return parser


# ----------------------------
# Commands
# ----------------------------
def _verify(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config).with_overrides(
            trials=args.trials,
            master_seed=args.seed,
            output_path=args.out,
            output_format=args.format,
            families=args.families,
            skip=args.skip,
            workers=args.workers,
        )
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return 2

    result = run_suite(config)
    write_report(result, config)
    for name, stats in result.summary["checks"].items():
        if stats["failed"]:
            logger.error(f"{name}: {stats['failed']} failure(s), worst margin {stats['worst_margin']:.3e}")
    return result.exit_code


def _replay(args: argparse.Namespace) -> int:
    try:
        report = replay(args.instance)
    except InstanceFormatError as e:
        logger.error(f"Cannot replay: {e}")
        return 2
    except PetzCheckError as e:
        logger.error(f"Replayed instance is invalid: {type(e).__name__}: {e}")
        return 1
    for name, margin in sorted(report.margins.items()):
        status = "FAIL" if name in report.failures else "ok"
        shown = "n/a" if margin is None else f"{margin:+.3e}"
        print(f"{name:<26} {shown:>12}  {status}")
    if report.error:
        print(f"error: {report.error}")
    return 0 if report.ok else 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)

    if args.command == "verify":
        return _verify(args)
    if args.command == "replay":
        return _replay(args)
    print(format_table(demo(args.channel)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
