import numpy as np
import pytest

from sandpile.emit import (
    emit_odometer_csv,
    emit_pgm,
    gray_levels,
    odometer_csv,
    pgm_bytes,
    read_pgm,
)
from sandpile.engine import stabilize
from sandpile.grid import Odometer, make_point_source, zero_odometer


def test_gray_mapping():
    assert gray_levels(np.arange(7)).tolist() == [255, 195, 135, 75, 15, 15, 15]


def test_pgm_of_single_toppling():
    res = stabilize(make_point_source(4, 2))
    data = pgm_bytes(res.final, res.odometer)
    assert data.startswith(b"P5\n3 3\n255\n")
    img = read_pgm(data)
    assert img[1, 1] == 255
    assert img[0, 1] == img[2, 1] == img[1, 0] == img[1, 2] == 75
    assert img[0, 0] == img[0, 2] == img[2, 0] == img[2, 2] == 135


def test_pgm_empty_box_is_one_background_pixel():
    res = stabilize(make_point_source(2, 2))
    img = read_pgm(pgm_bytes(res.final, res.odometer))
    assert img.shape == (1, 1) and img[0, 0] == 135


def test_pgm_orientation_top_row_is_largest_y():
    res = stabilize(make_point_source(4, 0))
    cfg = res.final.padded((-1, -1), (1, 1))
    cfg.values[1 + 1, 1 + 1] = 2          # cell (1, 1)
    img = read_pgm(pgm_bytes(cfg, res.odometer))
    assert img[0, 2] == 135 and img[2, 0] == 255


def test_pgm_golden(fixtures):
    res = stabilize(make_point_source(64, 2), "fifo")
    assert pgm_bytes(res.final, res.odometer) == (fixtures / "point_64_h2.pgm").read_bytes()


def test_pgm_deterministic(tmp_path):
    a, b = tmp_path / "a.pgm", tmp_path / "b.pgm"
    for path, strategy in [(a, "bulk-fifo"), (b, "tiled-parallel:8")]:
        res = stabilize(make_point_source(300, 2), strategy)
        emit_pgm(res.final, path, res.odometer)
    assert a.read_bytes() == b.read_bytes()


def test_pgm_needs_2d():
    with pytest.raises(ValueError):
        pgm_bytes(make_point_source(1, 0, 3))


def test_odometer_csv_examples():
    assert odometer_csv(Odometer(np.array([[1]]), (0, 0))) == "x,y,count\n0,0,1\n"
    assert odometer_csv(zero_odometer(make_point_source(0, 0))) == "x,y,count\n"
    assert odometer_csv(zero_odometer(make_point_source(0, 0, 3))) == "x,y,z,count\n"


def test_odometer_csv_sorted_and_deterministic(tmp_path):
    res = stabilize(make_point_source(16, 0))
    text = odometer_csv(res.odometer)
    rows = [tuple(map(int, line.split(","))) for line in text.splitlines()[1:]]
    assert [r[:2] for r in rows] == sorted(r[:2] for r in rows)
    assert sum(r[2] for r in rows) == res.total_topplings
    p1, p2 = tmp_path / "1.csv", tmp_path / "2.csv"
    emit_odometer_csv(res.odometer, p1)
    emit_odometer_csv(stabilize(make_point_source(16, 0), "lifo").odometer, p2)
    assert p1.read_bytes() == p2.read_bytes()
