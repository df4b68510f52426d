"""Regenerate the CSV fixtures under fixtures/ (deterministic)."""

import argparse
from pathlib import Path

from ofdm_ranging.calib import FixtureSpec, make_fixture, reported_summary, write_estimates, write_summary
from ofdm_ranging.config import OfdmConfig

SEED = 0  # project-wide default seed


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dir", default=Path(__file__).resolve().parents[1] / "fixtures", type=Path)
    args = ap.parse_args()
    args.dir.mkdir(parents=True, exist_ok=True)
    ofdm = OfdmConfig(bandwidth=20e6)
    write_estimates(make_fixture(FixtureSpec(true_ranges=(25.0,)), ofdm, SEED), args.dir / "target_25m.csv")
    write_estimates(make_fixture(FixtureSpec(), ofdm, SEED), args.dir / "static_5_to_30m.csv")
    write_estimates(make_fixture(FixtureSpec(slope_ratio=0.3), ofdm, SEED), args.dir / "sloped_5_to_30m.csv")
    write_summary(reported_summary(), args.dir / "reported_statistics.csv")


if __name__ == "__main__":
    main()
