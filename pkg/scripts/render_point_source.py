"""Stabilise n particles at the origin and write the final configuration as PGM.

    python3 scripts/render_point_source.py 100000 --ground 2 --out final.pgm
"""
import argparse
import time

from sandpile.emit import emit_odometer_csv, emit_pgm
from sandpile.engine import stabilize
from sandpile.geometry import match_square, radius, toppled_cluster
from sandpile.grid import make_point_source


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("n", type=lambda s: int(float(s)))
    ap.add_argument("--ground", type=int, default=2)
    ap.add_argument("--strategy", default="multiscale")
    ap.add_argument("--out", default="final.pgm")
    ap.add_argument("--odometer")
    args = ap.parse_args()

    t0 = time.perf_counter()
    res = stabilize(make_point_source(args.n, args.ground), args.strategy)
    top = toppled_cluster(res)
    emit_pgm(res.final, args.out, res.odometer)
    if args.odometer:
        emit_odometer_csv(res.odometer, args.odometer)
    print(f"n={args.n} h={args.ground}: radius {radius(top)}, square S_{match_square(top)}, "
          f"{res.total_topplings} topplings, {time.perf_counter() - t0:.1f}s -> {args.out}")


if __name__ == "__main__":
    main()
