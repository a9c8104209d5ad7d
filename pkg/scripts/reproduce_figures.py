"""Run the figure studies and print each headline number next to its reference.

Usage: python3 scripts/reproduce_figures.py [fig2 ... fig6] [--out DIR]
"""
from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

from rtheta.experiments import FIGURES, Cache, Setup


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("figures", nargs="*", help=f"any of {sorted(FIGURES)}; default all")
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()
    figures = args.figures or sorted(FIGURES)
    unknown = set(figures) - set(FIGURES)
    if unknown:
        ap.error(f"unknown figures {sorted(unknown)}")
    args.out.mkdir(parents=True, exist_ok=True)

    cache = Cache(Setup())
    summaries = {}
    for fig in figures:
        start = time.perf_counter()
        summaries[fig] = FIGURES[fig](args.out, cache)
        print(f"{fig} ({time.perf_counter() - start:.1f} s)")
        for h in summaries[fig]["headline"]:
            print(f"  {h['status']} {h['name']}: {h['value']:.6g} (reference {h['reference']})")
    with open(args.out / "summary.json", "w") as fh:
        json.dump(summaries, fh, indent=1)


if __name__ == "__main__":
    main()
