"""Command-line front end.

Every subcommand writes CSV to ``--out`` (or standard output) and a short
human summary plus progress to standard error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import math
import sys
from typing import Optional, Sequence

import numpy as np

from .calib import DataFormatError, parse_estimates, remove_linear_slope, replay_ranging, summary_text
from .campaign import run_campaign, stats_csv, sweep_csv, sweep_threshold
from .config import ConfigError, NoiseModel, Settings, load_config
from .ranging import energy_normalize
from .verify import verification_sweep

logger = logging.getLogger("ofdm_ranging")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FILE = 3
EXIT_CONFIG = 4
EXIT_DATA = 5

EPILOG = """exit status:
  0  success
  2  usage error (unknown flag or bad argument)
  3  file could not be read or written
  4  configuration violates a constraint
  5  input data is malformed
"""


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _range_list(text: str) -> list[float]:
    """``a,b,c`` or inclusive ``start:step:stop``."""
    if ":" in text:
        try:
            start, step, stop = (float(p) for p in text.split(":"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected start:step:stop, got {text!r}") from None
        if step <= 0:
            raise argparse.ArgumentTypeError("step must be > 0")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + k * step, 12) for k in range(count)]
    return _floats(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key-value config file (default: $OFDM_RANGING_CONFIG or built-ins)")
    common.add_argument("--out", help="output CSV path (default: standard output)")
    common.add_argument("-v", "--verbose", action="store_true", help="echo effective config and progress")

    p = argparse.ArgumentParser(prog="ofdm-ranging", description="Closest-target ranging from OFDM channel estimates.",
                                epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def campaign_flags(sp):
        sp.add_argument("--bandwidth-mhz", type=_floats, help="bandwidth(s) in MHz, comma separated")
        sp.add_argument("--rcs", type=_floats, help="target RCS value(s) in m^2, comma separated")
        sp.add_argument("--ranges", type=_range_list, help="target ranges in m: list or start:step:stop")
        sp.add_argument("--target2-range", type=float, help="fixed second target range in m")
        sp.add_argument("--target2-rcs", type=float, help="second target RCS in m^2")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--iterations", type=int, help="Monte Carlo trials per cell")
        sp.add_argument("--full-phy", action="store_true", help="simulate the LTF receive path")
        sp.add_argument("--no-noise", action="store_true", help="disable thermal noise")
        sp.add_argument("--workers", type=int, default=1, help="worker processes")

    sp = sub.add_parser("simulate", parents=[common], help="Monte Carlo campaign -> stats CSV", epilog=EPILOG,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    campaign_flags(sp)

    sp = sub.add_parser("sweep-threshold", parents=[common], help="detection rates versus threshold",
                        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    campaign_flags(sp)
    sp.add_argument("--epsilon", type=_range_list, help="thresholds: list or start:step:stop")

    sp = sub.add_parser("verify", parents=[common], help="delay-fit check of the cosine approximation",
                        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("--bandwidth-mhz", type=float)
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--ranges", type=_range_list, default=_range_list("0.5:0.5:50"))
    sp.add_argument("--noise", action="store_true", help="add LS estimate noise before fitting")

    for name, text in (("estimate", "range recorded estimates -> summary CSV"),
                       ("calibrate", "slope-removed metric per packet")):
        sp = sub.add_parser(name, parents=[common], help=text, epilog=EPILOG,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("--input", required=True, help="channel-estimate CSV")
        sp.add_argument("--bandwidth-mhz", type=float)
        sp.add_argument("--range-bias", type=float, help="range offset subtracted from estimates, m")
        if name == "estimate":
            sp.add_argument("--calibrate", action="store_true", help="remove linear slope before ranging")
    return p


def _settings(args) -> Settings:
    s = load_config(args.config, verbose=args.verbose)
    camp = s.campaign
    ofdm = s.ofdm
    bw = getattr(args, "bandwidth_mhz", None)
    if isinstance(bw, list):
        camp = dataclasses.replace(camp, bandwidths=tuple(b * 1e6 for b in bw))
        ofdm = dataclasses.replace(ofdm, bandwidth=bw[0] * 1e6)
    elif bw is not None:
        ofdm = dataclasses.replace(ofdm, bandwidth=bw * 1e6)
    changes = {}
    if args.command in ("simulate", "sweep-threshold"):
        if args.rcs is not None:
            changes["rcs_values"] = tuple(args.rcs)
        if args.ranges is not None:
            changes["target1_ranges"] = tuple(args.ranges)
    for flag, name in (("seed", "seed"), ("iterations", "iterations"),
                       ("target2_range", "target2_range"), ("target2_rcs", "target2_rcs")):
        v = getattr(args, flag, None)
        if v is not None:
            changes[name] = v
    if getattr(args, "full_phy", False):
        changes["full_phy"] = True
    if getattr(args, "epsilon", None):
        changes["epsilon_sweep"] = tuple(args.epsilon)
    camp = dataclasses.replace(camp, **changes)
    noise = s.noise
    if getattr(args, "no_noise", False):
        noise = NoiseModel(noise.noise_figure_db, noise.temperature, enabled=False)
    bias = s.range_bias if getattr(args, "range_bias", None) is None else args.range_bias
    return dataclasses.replace(s, ofdm=ofdm, campaign=camp, noise=noise, range_bias=bias)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_simulate(args, s: Settings) -> None:
    stats = run_campaign(s.campaign, s, workers=args.workers)
    _emit(stats_csv(stats), args.out)
    for r in stats.rows:
        print(f"{r.bandwidth / 1e6:g} MHz  rcs {r.rcs:g} m^2  {r.range_m:g} m: p_d {r.p_d:.3f}  "
              f"p_fa {r.p_fa:.4f}  rms {r.rms_error:.3f} m", file=sys.stderr)


def cmd_sweep(args, s: Settings) -> None:
    if not s.campaign.epsilon_sweep:
        raise ConfigError("epsilon_sweep", None, "sweep-threshold needs --epsilon or epsilon_sweep in the config")
    stats = run_campaign(s.campaign, s, workers=args.workers)
    rows = sweep_threshold(stats, s.campaign.epsilon_sweep)
    _emit(sweep_csv(rows), args.out)
    print(f"{len(rows)} threshold rows over {len(s.campaign.epsilon_sweep)} thresholds", file=sys.stderr)


def cmd_verify(args, s: Settings) -> None:
    noise = s.noise if args.noise else None
    seed = s.campaign.seed if args.seed is None else args.seed
    pts = verification_sweep(args.ranges, s.ofdm, args.trials, seed, s.budget, s.nelder_mead, noise)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["range_m", "bandwidth_hz", "rms_error_m", "trials", "failures"])
    for p in pts:
        w.writerow([repr(p.true_range), repr(p.bandwidth), repr(p.rms_error), p.trials, p.failures])
    _emit(buf.getvalue(), args.out)
    worst = max(pts, key=lambda p: p.rms_error)
    print(f"{len(pts)} ranges at {s.ofdm.bandwidth / 1e6:g} MHz; worst RMS {worst.rms_error:.3f} m "
          f"at {worst.true_range:g} m", file=sys.stderr)


def cmd_estimate(args, s: Settings) -> None:
    records = parse_estimates(args.input, range_bias=s.range_bias)
    report = replay_ranging(records, s.grid, s.ofdm, calibrate=args.calibrate)
    _emit(summary_text(report.summary), args.out)
    for r in report.summary:
        print(f"true {r.true_range}: n={r.count} mean {r.mean:.3f} m std {r.std:.3f} m", file=sys.stderr)
    if report.failures:
        print(f"{len(report.failures)} packet(s) could not be processed", file=sys.stderr)


def cmd_calibrate(args, s: Settings) -> None:
    records = parse_estimates(args.input, range_bias=s.range_bias)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["packet_id", "subcarrier", "metric"])
    for rec in records:
        x = remove_linear_slope(energy_normalize(rec.estimate.values), rec.estimate.indices)
        for m, v in zip(rec.estimate.indices, np.asarray(x)):
            w.writerow([rec.packet_id, m, repr(float(v))])
    _emit(buf.getvalue(), args.out)
    print(f"calibrated {len(records)} packets", file=sys.stderr)


COMMANDS = {"simulate": cmd_simulate, "sweep-threshold": cmd_sweep, "verify": cmd_verify,
            "estimate": cmd_estimate, "calibrate": cmd_calibrate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        settings = _settings(args)
        COMMANDS[args.command](args, settings)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_FILE
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK
