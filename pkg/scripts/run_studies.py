"""Run the feasibility and delay studies once and write both report pairs.

    python scripts/run_studies.py --instances 20 --out-dir reports

The two studies share one set of solves, so this is cheaper than invoking
``nfvslice experiment`` twice.
"""

import argparse
import json
import logging
import time
from pathlib import Path

from nfvslice.experiments import StudyConfig, collect, run_delay_study, run_feasibility_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--service-counts", default="1,2,3,4")
    ap.add_argument("--instances", type=int, default=20)
    ap.add_argument("--base-seed", type=int, default=0)
    ap.add_argument("--paths", type=int, default=2)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out-dir", default="reports")
    ap.add_argument("-v", "--verbose", action="store_true", help="show decode warnings")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR)

    cfg = StudyConfig(service_counts=tuple(int(k) for k in args.service_counts.split(",")),
                      instances=args.instances, base_seed=args.base_seed, path_budget=args.paths,
                      workers=args.workers)
    t = time.perf_counter()
    rows = collect(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, run in (("feasibility", run_feasibility_study), ("delay", run_delay_study)):
        report = run(cfg, rows)
        report.write(out / f"{name}.csv", out / f"{name}.json")
        print(json.dumps(report.aggregates, indent=2))
    print(f"{len(rows)} rows in {time.perf_counter() - t:.1f}s -> {out}/")


if __name__ == "__main__":
    main()
