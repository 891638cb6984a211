"""Run every named preset, first as a hypothesis check, then as its own experiment.

usage: python scripts/run_presets.py [out_root] [--quick]

--quick shrinks path counts and horizons for a smoke run. Exit status is
the worst exit code seen.
"""

import argparse
import os
import re

from ergomix import cli
from ergomix.config import PRESETS, parse_config, preset_text


def quick(text):
    text = re.sub(r"(?m)^n_paths = \d+$", "n_paths = 200", text)
    text = re.sub(r"(?m)^seeds = \[.*\]$", "seeds = [0, 1]", text)
    return re.sub(r"(?m)^T = [0-9.]+$", "T = 0.5", text)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_root", nargs="?", default="runs")
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    worst = 0
    for name in PRESETS:
        for kind in ("check", None):
            text = preset_text(name, kind)
            if args.quick and kind is None:
                text = quick(text)
            cfg = parse_config(text)
            out = os.path.join(args.out_root, f"{name}-{cfg.kind}")
            code, _ = cli.run(cfg, out)
            worst = max(worst, code)
    return worst


if __name__ == "__main__":
    raise SystemExit(main())
