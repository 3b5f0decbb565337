import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from miscat.grid import GridError, GridSignal, read_pgrid, write_pgm, write_pgrid

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.sampled_from([(4, 4), (7,), (1, 1)]), elements=finite),
       st.floats(1e-3, 1e3))
def test_pgrid_round_trip_is_bit_exact(tmp_path_factory, values, pixel):
    path = tmp_path_factory.mktemp("g") / "x.pgrid"
    write_pgrid(path, GridSignal(values, pixel), comment="note")
    back = read_pgrid(path)
    assert np.array_equal(back.values, values)
    assert back.pixel_size == pixel
    assert back.meta["comment"] == "note"


def test_rewrite_is_byte_identical(tmp_path):
    g = GridSignal(np.random.default_rng(1).normal(size=(8, 8)), 10.0)
    write_pgrid(tmp_path / "a.pgrid", g)
    write_pgrid(tmp_path / "b.pgrid", read_pgrid(tmp_path / "a.pgrid"))
    assert (tmp_path / "a.pgrid").read_bytes() == (tmp_path / "b.pgrid").read_bytes()


def test_rejects_bad_shapes_and_values():
    with pytest.raises(GridError):
        GridSignal(np.zeros((3, 4)))
    with pytest.raises(GridError):
        GridSignal(np.zeros((2, 2, 2)))
    with pytest.raises(GridError):
        GridSignal(np.array([0.0, np.nan]))


def test_bad_files(tmp_path):
    p = tmp_path / "bad.pgrid"
    p.write_text("PGRID 2 3 1.0\n1 2 3\n")
    with pytest.raises(GridError, match="expected 9"):
        read_pgrid(p)
    p.write_text("GRID 2 3\n")
    with pytest.raises(GridError, match="header"):
        read_pgrid(p)


def test_constructors_and_pgm(tmp_path):
    z = GridSignal.zeros(4)
    assert z.n == 4 and z.d == 2 and not z.values.any()
    f = GridSignal.full(5, 2.5, d=1)
    assert f.d == 1 and np.all(f.values == 2.5)
    write_pgm(tmp_path / "x.pgm", GridSignal(np.arange(16.0).reshape(4, 4)))
    data = (tmp_path / "x.pgm").read_bytes()
    assert data.startswith(b"P5\n4 4\n255\n") and data[-1] == 255
