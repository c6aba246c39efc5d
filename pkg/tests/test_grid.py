import numpy as np
import pytest
from hypothesis import given, strategies as st

from sandpile.grid import (
    BoxArray,
    Odometer,
    SandpileConfig,
    add_at,
    add_everywhere,
    config_from_points,
    config_leq,
    format_config,
    laplacian,
    make_point_source,
    make_square_config,
    neighbors,
    parse_config,
)

points2 = st.tuples(st.integers(-50, 50), st.integers(-50, 50))


def test_neighbors_of_origin():
    assert set(neighbors((0, 0))) == {(0, -1), (0, 1), (-1, 0), (1, 0)}


def test_neighbors_translate():
    assert set(neighbors((2, -3))) == {(2, -4), (2, -2), (1, -3), (3, -3)}


def test_neighbors_3d():
    nb = neighbors((0, 0, 0))
    assert len(nb) == 6
    assert sorted(map(abs, map(sum, nb))) == [1] * 6


@given(st.lists(st.integers(-20, 20), min_size=1, max_size=4))
def test_neighbors_distinct_unit_steps(p):
    nb = neighbors(p)
    assert len(nb) == 2 * len(p) == len(set(nb))
    assert tuple(p) not in nb
    assert all(sum(abs(a - b) for a, b in zip(q, p)) == 1 for q in nb)


def test_point_source_values():
    c = make_point_source(4, 2)
    assert c.height((0, 0)) == 4 and c.height((7, -3)) == 2 and c.background == 2
    z = make_point_source(0, 0)
    assert z.is_stable() and z.height((0, 0)) == 0
    c3 = make_point_source(100, 4, 3)
    assert c3.dim == 3 and c3.height((0, 0, 0)) == 100 and c3.background == 4


@pytest.mark.parametrize("n,h", [(-1, 0), (1, -2)])
def test_point_source_rejects_negative(n, h):
    with pytest.raises(ValueError):
        make_point_source(n, h)


@given(st.integers(0, 1000), st.integers(0, 3), st.integers(0, 4), st.integers(0, 4))
def test_point_source_mass_on_box(n, h, a, b):
    c = make_point_source(n, h)
    block = c.on_box((-a, -b), (b, a))
    assert block.sum() == n + h * (block.size - 1)


def test_square_config_single_cell():
    c = make_square_config(1, 1, 2)
    assert c.height((0, 0)) == 4 and c.height((1, 0)) == 2


def test_square_config_no_fours():
    c = make_square_config(0, 2, 2)
    block = c.on_box((-1, -1), (1, 1))
    assert (block == 3).all() and c.height((2, 0)) == 2


def test_square_config_nested():
    c = make_square_config(2, 3, 2)
    block = c.on_box((-2, -2), (2, 2))
    assert (block[1:4, 1:4] == 4).all()
    assert (block == 3).sum() == 25 - 9
    assert c.height((3, 0)) == 2


def test_square_config_rejects_r1_above_r2():
    with pytest.raises(ValueError):
        make_square_config(3, 2)


@given(st.integers(0, 6), st.integers(1, 3))
def test_square_config_cell_count(r, d):
    c = make_square_config(r, r, 2 * d - 2, d)
    assert int((c.values != c.background).sum()) == ((2 * r - 1) ** d if r else 0)


def test_config_leq_examples():
    assert config_leq(make_point_source(4, 2), make_point_source(5, 2))
    assert not config_leq(make_point_source(0, 2), make_point_source(0, 1))
    with pytest.raises(ValueError):
        config_leq(make_point_source(1, 0, 2), make_point_source(1, 0, 3))


def test_add_everywhere_examples():
    one = add_everywhere(make_point_source(0, 0), 1)
    assert one.background == 1 and one.height((0, 0)) == 1
    assert add_everywhere(make_point_source(6, 0), 2) == make_point_source(8, 2)
    c = make_point_source(5, 1)
    assert add_everywhere(add_everywhere(c, 1), 1) == add_everywhere(c, 2)


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 2), st.integers(0, 3))
def test_add_everywhere_keeps_order(n, extra, h, k):
    a, b = make_point_source(n, h), make_point_source(n + extra, h)
    assert config_leq(add_everywhere(a, k), add_everywhere(b, k))


@given(points2, st.integers(0, 9))
def test_add_at_grows_box(p, k):
    c = add_at(make_point_source(1, 1), p, k)
    assert c.height(p) == 1 + k
    assert c.values.sum() - c.background * (c.values.size - 1) == 1 + k


def test_box_equality_ignores_box_size():
    a = make_point_source(7, 2)
    assert a == a.padded((-5, -5), (3, 4))
    assert a != make_point_source(7, 1)


def test_trimmed_keeps_origin():
    c = config_from_points([((3, 1), 5)], 0, 2)
    t = c.trimmed()
    assert t.lo == (0, 0) and t.hi == (3, 1) and t == c


def test_laplacian_of_single_topple():
    u = Odometer(np.array([[1]]), (0, 0))
    lap = laplacian(u)
    assert lap.shape == (3, 3)
    assert lap[1, 1] == -4 and lap[0, 1] == lap[2, 1] == lap[1, 0] == lap[1, 2] == 1
    assert lap.sum() == 0


@given(st.lists(st.tuples(points2, st.integers(0, 7)), max_size=8), st.integers(0, 3))
def test_config_text_round_trip(pts, h):
    c = config_from_points(pts, h, 2)
    assert parse_config(format_config(c)) == c


def test_config_text_layout():
    c = make_point_source(4, 2).padded((-1, 0), (1, 0))
    assert format_config(c).split("\n")[:3] == ["2 2", "-1 1 0 0", "2 4 2"]


def test_parse_config_rejects_short_body():
    with pytest.raises(ValueError):
        parse_config("2 0\n0 1 0 1\n1 2 3")


def test_config_validation():
    with pytest.raises(ValueError):
        SandpileConfig(np.array([[-1]]), (0, 0), 0)
    with pytest.raises(ValueError):
        BoxArray(np.zeros((2, 2), dtype=np.int64), (3, 0))
