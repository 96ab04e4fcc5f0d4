"""Command-line entry point: ``hmcsim run`` and ``hmcsim check``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import HMCError
from .geometry import AddressFilter
from .harness import (EXPERIMENTS, PATTERNS, ExperimentSpec, compare_to_reference,
                      run_experiment, summarize)
from .protocol import RequestType
from .records import read_csv, write_csv
from .simulator import Sampling
from .workload import MAX_PORTS, Addressing


def _hex(text: str) -> int:
    return int(text, 16)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmcsim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment family")
    run.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    run.add_argument("--device", default="hmc-1.1-4GB")
    run.add_argument("--cooling", default="Cfg2", choices=("Cfg1", "Cfg2", "Cfg3", "Cfg4"))
    run.add_argument("--size", type=int, choices=range(1, 9), metavar="N",
                     help="request size in 16 B units (1..8)")
    run.add_argument("--ports", "--p", type=int, choices=range(1, MAX_PORTS + 1),
                     metavar="N", help="active ports (1..9)")
    kind = run.add_mutually_exclusive_group()
    kind.add_argument("--ro", dest="rtype", action="store_const", const="ro")
    kind.add_argument("--wo", dest="rtype", action="store_const", const="wo")
    kind.add_argument("--rw", dest="rtype", action="store_const", const="rw")
    run.add_argument("--mask", type=_hex, help="32-bit mask register, hex")
    run.add_argument("--anti_mask", "--anti-mask", type=_hex, default=0,
                     help="32-bit anti-mask register, hex")
    run.add_argument("--pattern", action="append", choices=sorted(PATTERNS),
                     help="restrict to a targeted access pattern (repeatable)")
    run.add_argument("--linear", action="store_true", help="linear addressing")
    run.add_argument("--linear-step", type=int, help="linear stride in bytes")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--placements", type=int, default=8,
                     help="random placements averaged per pattern")
    run.add_argument("--exhaustive", action="store_true",
                     help="average over every placement instead of a sample")
    run.add_argument("--warmup", type=int, default=Sampling.warmup)
    run.add_argument("--window", type=int, default=Sampling.window,
                     help="completed requests in the measured window")
    run.add_argument("--duration", type=float, help="simulated seconds to extrapolate to")
    run.add_argument("--out", default="out", help="output directory")

    check = sub.add_parser("check", help="compare records.csv against the reference table")
    check.add_argument("--out", default="out")
    check.add_argument("--reference", help="alternative reference JSON")
    return parser


def spec_from_args(args) -> ExperimentSpec:
    custom = None
    if args.mask is not None:
        custom = AddressFilter.from_registers(args.mask, args.anti_mask)
    elif args.anti_mask:
        custom = AddressFilter.from_registers(0xFFFFFFFF, args.anti_mask)
    addressing = ()
    if args.linear:
        addressing = (Addressing.LINEAR,)
    return ExperimentSpec(
        experiment=args.experiment,
        device=args.device,
        cooling=args.cooling,
        request_types=(RequestType.parse(args.rtype),) if args.rtype else (),
        payloads=(args.size * 16,) if args.size else (),
        ports=(args.ports,) if args.ports else (),
        patterns=tuple(args.pattern or ()),
        custom_filter=custom,
        addressing=addressing,
        linear_step=args.linear_step,
        seed=args.seed,
        duration=args.duration,
        placements=args.placements,
        exhaustive=args.exhaustive,
        sampling=Sampling(args.warmup, args.window),
    )


def _check(out: Path, records, reference=None) -> bool:
    import json
    ref = None
    if reference:
        with open(reference) as fh:
            ref = json.load(fh)["metrics"]
    report = compare_to_reference(records, ref)
    (out / "reference_report.txt").write_text(report.text())
    sys.stdout.write(report.text())
    return report.passed


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        if args.command == "run":
            spec = spec_from_args(args)
            records = run_experiment(spec)
            out.mkdir(parents=True, exist_ok=True)
            with open(out / "records.csv", "w", newline="") as fh:
                write_csv(records, fh)
            (out / "summary.txt").write_text(summarize(records).text())
            _check(out, records)
            print(f"wrote {len(records)} records to {out / 'records.csv'}")
            return 0
        with open(out / "records.csv", newline="") as fh:
            records = read_csv(fh)
        return 0 if _check(out, records, args.reference) else 1
    except (HMCError, OSError, ValueError) as exc:
        print(f"hmcsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
