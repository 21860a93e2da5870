"""Thread-value layout type: decoding, restriction, replication filtering."""

import pytest

from tilesynth.errors import NonBijectiveLayout, ShapeMismatch
from tilesynth.layout import parse_layout
from tilesynth.tv import TvLayout, filter_replication, restrict_tv, tv_from_mode_lists


def tv(text, tile):
    return TvLayout(parse_layout(text), tile)


def test_requires_two_modes():
    with pytest.raises(ShapeMismatch):
        TvLayout(parse_layout("(4,2,2):(1,4,8)"), (16,))


def test_position_and_coords():
    f = tv("((2,4),(2,2)):((8,1),(4,16))", (4, 8))
    assert f.position(2, 3) == 21
    assert f.coords(2, 3) == (1, 5)
    assert f.threads == 8 and f.values == 4


def test_position_bounds_checked():
    f = tv("((2,4),(2,2)):((8,1),(4,16))", (4, 8))
    with pytest.raises(ShapeMismatch):
        f.position(8, 0)


def test_bijectivity_check():
    good = tv("((4,8),(2,4)):((64,1),(32,8))", (32, 8))
    good.check_bijective("q")
    bad = tv("((4,8),(2,4)):((64,1),(32,0))", (32, 8))
    with pytest.raises(NonBijectiveLayout):
        bad.check_bijective("broken")


def test_same_function_across_regroupings():
    a = tv("((4,8),(2,2,8)):((128,1),(64,8,512))", (64, 64))
    b = tv("((4,8),(2,2,2,4)):((128,1),(64,8,512,1024))", (64, 64))
    assert a.same_function(b)
    c = tv("((4,8),(2,2,8)):((128,1),(64,8,256))", (64, 64))
    assert not a.same_function(c)


def test_restrict_keeps_fast_digits():
    f = tv("((4,8,2),(2,2,2)):((32,1,128),(16,8,256))", (16, 32))
    inner, dropped_t, dropped_v = restrict_tv(f, 32, 8)
    assert inner.threads == 32 and inner.values == 8
    assert dropped_t == [(2, 128)] and dropped_v == []
    for t in range(32):
        for v in range(8):
            assert inner.position(t, v) == f.position(t, v)


def test_filter_replication_drops_broadcast_digits():
    f = tv("((4,8,4),(2,2)):((128,1,0),(64,8))", (64, 64))
    filtered = filter_replication(f)
    assert filtered.threads == 32
    assert filtered.values == f.values
    for t in range(32):
        for v in range(4):
            assert filtered.position(t, v) == f.position(t, v)


def test_mode_list_assembly_drops_unit_modes():
    f = tv_from_mode_lists([(4, 1), (1, 99), (8, 4)], [(2, 32), (1, 7)], (64,))
    assert str(f.layout) == "((4,8),2):((1,4),32)"
    assert f.threads == 32 and f.values == 2
