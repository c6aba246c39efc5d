"""Run every verification suite and print one PASS/FAIL line per check.

    python3 scripts/verify_campaign.py              # desk-scale defaults
    python3 scripts/verify_campaign.py --large      # adds n = 10^5 and 10^6 runs
    python3 scripts/verify_campaign.py --json report.json
"""
import argparse
import json
import sys
import time

from sandpile import experiments as ex
from sandpile.cli import SUITES, RunSpec, verify_reports

LARGE_N = {
    "lemma1": [10**4, 10**5, 10**6],
    "theorem2": [10**4, 10**5, 10**6],
    "theorem2-stages": [10**3, 10**4, 10**5],
    "theorem1-square": [4, 10, 10**2, 10**3, 10**4, 10**5],
}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--large", action="store_true")
    ap.add_argument("--suite", action="append", choices=SUITES)
    ap.add_argument("--rmax", type=int, default=30)
    ap.add_argument("--json", dest="json_path")
    args = ap.parse_args()

    everything = []
    for suite in args.suite or [s for s in SUITES if s != "scaling"]:
        rmax = min(args.rmax, 10) if suite == "lemma2-stages" else args.rmax
        spec = RunSpec("verify", suite=suite, rmax=rmax,
                       n=LARGE_N.get(suite) if args.large else None)
        t0 = time.perf_counter()
        reports = verify_reports(spec)
        passed = sum(r.passed for r in reports)
        print(f"== {suite}: {passed}/{len(reports)} passed in {time.perf_counter() - t0:.1f}s")
        for rep in reports:
            if not rep.passed or len(reports) <= 6:
                print("  " + rep.line())
        everything += reports
    if args.json_path:
        with open(args.json_path, "w") as fh:
            json.dump([r.to_dict() for r in everything], fh, indent=1, default=str)
    return 0 if all(r.passed for r in everything) else 1


if __name__ == "__main__":
    sys.exit(main())
