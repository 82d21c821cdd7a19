"""``coopsim`` command: run a campaign from a JSON spec and write CSV reports."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .campaign import CampaignError, CampaignSpec, format_table, run_campaign
from .scenarios import ScenarioError

log = logging.getLogger("coopsim")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="coopsim",
        description="Selective vs random partner selection for cooperative perception.")
    p.add_argument("--spec", type=Path, help="campaign spec JSON (default: the full matrix)")
    p.add_argument("--out", type=Path, help="output directory (overrides the spec)")
    p.add_argument("--replay-dir", type=Path, help="write a per-tick replay CSV per episode")
    p.add_argument("--transport", choices=("inproc", "udp"), help="message transport")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--plot-csv", action="store_true",
                   help="write per-tick utility and selection traces under <out>/traces")
    p.add_argument("-q", "--quiet", action="store_true", help="no summary table")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = CampaignSpec.load(args.spec) if args.spec else CampaignSpec()
        overrides = {k: v for k, v in (("out", args.out and str(args.out)),
                                       ("transport", args.transport), ("jobs", args.jobs))
                     if v is not None}
        spec = replace(spec, **overrides)
    except (OSError, ValueError) as e:
        print(f"coopsim: bad spec: {e}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        result = run_campaign(spec, replay_dir=args.replay_dir, plot_csv=args.plot_csv)
    except (ScenarioError, CampaignError) as e:
        print(f"coopsim: {e}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(format_table(result))
        print(f"{spec.episode_count()} episodes in {time.perf_counter() - t0:.1f} s; "
              f"reports in {spec.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
