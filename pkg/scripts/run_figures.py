#!/usr/bin/env python3
"""Reproduce the simulation figures at desk scale.

Runs the shipped scenario files and leaves traces, plots, and summaries
under out/<name>/.  Pass --full for the full-size variants (fig1 with 50
robots takes a few minutes of CPU).
"""

import argparse
import pathlib
import sys

from gvfcoord import cli

SCENARIOS = pathlib.Path(__file__).resolve().parent.parent / "scenarios"

DESK = ["fig1_desk", "fig2_desk", "fig3_desk", "flight_desk"]
FULL = ["fig1", "fig2", "fig3", "flight"]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--full", action="store_true",
                        help="run the full-size scenarios instead of the desk variants")
    parser.add_argument("--no-plots", action="store_true")
    args = parser.parse_args()

    worst = 0
    for name in (FULL if args.full else DESK):
        argv = ["run", str(SCENARIOS / f"{name}.json")]
        if args.no_plots:
            argv.append("--no-plots")
        print(f"== {name} ==", flush=True)
        worst = max(worst, cli.main(argv))
    return worst


if __name__ == "__main__":
    sys.exit(main())
