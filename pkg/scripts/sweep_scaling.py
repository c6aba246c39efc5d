"""Radius-vs-n sweeps with log-log fits.

    python3 scripts/sweep_scaling.py --out results/
    python3 scripts/sweep_scaling.py --d 3 --ground 4 --hi 1e5 --points 7

Writes ``sweep_d{d}_h{h}.csv`` and ``fit_d{d}_h{h}.json`` into ``--out``.
"""
import argparse
import logging
from pathlib import Path

from sandpile import experiments as ex


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--ground", type=int, default=2)
    ap.add_argument("--lo", type=float, default=1e3)
    ap.add_argument("--hi", type=float, default=1e6)
    ap.add_argument("--points", type=int, default=7)
    ap.add_argument("--strategy", default="multiscale")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    ns = ex.log_spaced(int(args.lo), int(args.hi), args.points)
    records, fit = ex.sweep(ns, args.ground, args.d, args.strategy, workers=args.workers)
    args.out.mkdir(parents=True, exist_ok=True)
    tag = f"d{args.d}_h{args.ground}"
    (args.out / f"sweep_{tag}.csv").write_text(ex.sweep_csv(records))
    for r in records:
        logging.info("n=%d radius=%d square_r=%s topplings=%d %.1fs", r.n, r.cluster_radius,
                     r.square_r, r.total_topplings, r.wall_time)
    if fit is not None:
        (args.out / f"fit_{tag}.json").write_text(fit.to_json() + "\n")
        logging.info("r ~ %.3f n^%.4f (fit over n >= %d, %d points)",
                     fit.c, fit.alpha, fit.n_min_used, fit.points)


if __name__ == "__main__":
    main()
