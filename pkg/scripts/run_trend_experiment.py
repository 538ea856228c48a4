#!/usr/bin/env python3
"""Reproduce the decay-time x mode interference-reduction table.

Builds synthetic scenes over a grid of reverberation times, runs every
processing mode, and prints the aggregated shadow-SIR table. With default
arguments this is the desk-scale experiment behind the acceptance trend
check (about six minutes of compute).
"""

import argparse
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from derev.cli import main as derev_main


def build_grid(args) -> str:
    return "\n".join([
        f"t60_grid = {args.t60}",
        f"modes = {args.modes}",
        f"seeds = {args.seeds}",
        f"duration = {args.duration}",
        f"snr_db = {args.snr}",
        "doa_azimuth = 0.7853981633974483",
        "mic_count = 8",
        "mic_spacing = 0.04",
        "sample_rate = 16000",
    ]) + "\n"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--t60", default="0.4,0.5,0.6,0.7,0.8")
    parser.add_argument("--modes", default="passthrough,mvdr_only,mclp_only,full")
    parser.add_argument("--seeds", default="100,101,102,103,104")
    parser.add_argument("--duration", type=float, default=10.0)
    parser.add_argument("--snr", type=float, default=10.0)
    parser.add_argument("-o", "--output", default="trend_table.csv")
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        grid = Path(tmp) / "grid.cfg"
        grid.write_text(build_grid(args))
        code = derev_main(["sweep", str(grid), "-o", args.output])
    if code != 0:
        return code

    rows = [line.split(",") for line in
            Path(args.output).read_text().splitlines()]
    header, body = rows[0], rows[1:]
    t60_idx = header.index("t60")
    mode_idx = header.index("mode")
    delta_idx = header.index("delta_sir_db")
    print("\ndelta-SIR (dB) by decay time and mode:")
    modes = list(dict.fromkeys(row[mode_idx] for row in body))
    t60s = list(dict.fromkeys(row[t60_idx] for row in body))
    print(f"{'t60 [s]':>10} " + " ".join(f"{m:>12}" for m in modes))
    for t60 in t60s:
        cells = []
        for mode in modes:
            value = next(float(r[delta_idx]) for r in body
                         if r[t60_idx] == t60 and r[mode_idx] == mode)
            cells.append(f"{value:+12.2f}")
        print(f"{float(t60):>10.2f} " + " ".join(cells))
    print(f"\nfull table written to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
