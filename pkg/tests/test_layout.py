"""Layout algebra: golden values, oracles, and randomized properties."""

import random

import pytest

from tilesynth import inttuple as it
from tilesynth.errors import (
    LayoutIncompatible,
    NotComplementable,
    NotDivisible,
    NotInvertible,
    OutOfDomain,
    ParseError,
    ShapeMismatch,
)
from tilesynth.layout import (
    Layout,
    coalesce,
    complement,
    compose,
    concat,
    dim_restrict,
    inverse,
    parse_layout,
    restrict_first_mode,
    restrict_mode_split,
)

L = parse_layout


# ---------------------------------------------------------------- inttuple


def test_flatten_and_size():
    assert it.flatten(((2, 2), 8)) == (2, 2, 8)
    assert it.size(((2, 2), 8)) == 32
    assert it.decode(17, (8, 2, 2)) == (1, 0, 1)
    assert it.encode((1, 0, 1), (8, 2, 2)) == 17


def test_parse_tuple_rejects_garbage():
    with pytest.raises(ParseError):
        it.parse_tuple("(2,)")
    with pytest.raises(ParseError):
        it.parse_tuple("()")
    with pytest.raises(ParseError):
        it.parse_tuple("(2,3))")


# ---------------------------------------------------------------- construction


def test_layout_text_round_trip():
    text = "((2,4),(2,2)):((8,1),(4,16))"
    assert str(L(text)) == text


def test_congruence_enforced():
    with pytest.raises(ShapeMismatch):
        Layout((2, 4), (1, (2, 2)))


def test_size_zero_rejected():
    with pytest.raises(ShapeMismatch):
        Layout((2, 0), (1, 2))


# ---------------------------------------------------------------- evaluate


def test_evaluate_interleaved_tile():
    m = L("((2,2),8):((1,16),2)")
    assert m((2, 4)) == 24


def test_evaluate_thread_value_pair():
    f = L("((2,4),(2,2)):((8,1),(4,16))")
    pos = f((2, 3))
    assert pos == 21
    # Decode in the 4x8 tile, first dim fastest.
    assert (pos % 4, pos // 4) == (1, 5)


def test_evaluate_composed_tile_map():
    g_of_q = L("((8,2,2),(2,4)):((1,8,256),(16,32))")
    assert g_of_q((17, 5)) == 337


def test_evaluate_linear_matches_coord():
    f = L("((2,4),(2,2)):((8,1),(4,16))")
    for i in range(f.size()):
        t, v = i % 8, i // 8
        assert f(i) == f((t, v))


def test_evaluate_errors():
    f = L("(4,8):(1,4)")
    with pytest.raises(OutOfDomain):
        f(32)
    with pytest.raises(OutOfDomain):
        f((4, 0))
    with pytest.raises(ShapeMismatch):
        f((1, 2, 3))


# ---------------------------------------------------------------- coalesce


@pytest.mark.parametrize(
    "before, after",
    [
        ("(2,4):(1,2)", "(8):(1)"),
        ("(1,8):(0,1)", "(8):(1)"),
        ("((2,2),8):((1,16),2)", "(2,2,8):(1,16,2)"),
        ("(1):(0)", "(1):(0)"),
        ("(2,2,2):(1,2,4)", "(8):(1)"),
    ],
)
def test_coalesce_golden(before, after):
    assert str(coalesce(L(before))) == after


def test_coalesce_pointwise_oracle():
    layout = L("((2,2),8):((1,16),2)")
    merged = coalesce(layout)
    assert [layout(i) for i in range(32)] == [merged(i) for i in range(32)]


# ---------------------------------------------------------------- compose


def test_compose_golden_tile_map():
    g = L("((4,8),(2,2,2)):((32,1),(16,8,256))")
    q_inv = L("((8,4),(2,4)):((4,64),(32,1))")
    result = compose(g, q_inv)
    assert str(result) == "((8,2,2),(2,4)):((1,8,256),(16,32))"


def test_compose_identity_right_operand():
    assert str(compose(L("(4):(2)"), L("(4):(1)"))) == "(4):(2)"


def test_compose_strided():
    r = compose(L("(8):(2)"), L("(4):(2)"))
    assert str(r) == "(4):(4)"
    for x in range(4):
        assert r(x) == 4 * x


def test_compose_out_of_domain():
    with pytest.raises(OutOfDomain):
        compose(L("(4):(1)"), L("(8):(1)"))


def test_compose_divisibility_error():
    # Stride 3 cannot step evenly through a (4,2) boundary.
    with pytest.raises(LayoutIncompatible):
        compose(L("(4,4):(1,5)"), L("(4):(3)"))


def _random_bijective_layout(rng, max_size=64):
    """Random permutation-style layout built from shuffled factor chain."""
    n_modes = rng.randint(1, 4)
    shapes = []
    total = 1
    for _ in range(n_modes):
        s = rng.choice([2, 2, 3, 4])
        if total * s > max_size:
            break
        shapes.append(s)
        total *= s
    if not shapes:
        shapes = [2]
    order = list(range(len(shapes)))
    rng.shuffle(order)
    strides = [0] * len(shapes)
    w = 1
    for i in order:
        strides[i] = w
        w *= shapes[i]
    return Layout(tuple(shapes), tuple(strides))


def test_compose_random_pointwise_1000():
    rng = random.Random(20240817)
    checked = 0
    while checked < 1000:
        a = _random_bijective_layout(rng)
        # b: sub-sampling layout guaranteed inside a's domain
        step = rng.choice([1, 2, 4])
        if step > a.size():
            continue
        bn = a.size() // step
        if bn < 1:
            continue
        b = Layout((bn,), (step,))
        try:
            r = compose(a, b)
        except LayoutIncompatible:
            continue
        for x in range(b.size()):
            assert r(x) == a(b(x))
        checked += 1


# ---------------------------------------------------------------- complement


def _assert_bijection_with_complement(a, m):
    comp = complement(a, m)
    combined = concat(a, comp)
    image = sorted(combined(i) for i in range(combined.size()))
    assert image == list(range(m))


@pytest.mark.parametrize(
    "a, m, expected",
    [
        ("(4):(2)", 8, "(2):(1)"),
        ("(1):(0)", 4, "(4):(1)"),
        ("(2):(4)", 8, "(4):(1)"),
    ],
)
def test_complement_golden(a, m, expected):
    assert str(complement(L(a), m)) == expected
    _assert_bijection_with_complement(L(a), m)


def test_complement_rejects_non_injective():
    with pytest.raises(NotComplementable):
        complement(L("(4):(0)"), 8)


def test_complement_rejects_overlap():
    with pytest.raises(NotComplementable):
        complement(L("(4,4):(1,2)"), 32)


# ---------------------------------------------------------------- inverse


def test_inverse_round_trip_register_fragment():
    q_inv = L("((8,4),(2,4)):((4,64),(32,1))")
    q = inverse(q_inv)
    back = inverse(q)
    assert back == coalesce(q_inv)
    for x in range(q_inv.size()):
        assert q(q_inv(x)) == x


def test_inverse_identity():
    assert str(inverse(L("(8):(1)"))) == "(8):(1)"


def test_inverse_small_golden():
    assert str(inverse(L("(4,2):(2,1)"))) == "(2,4):(4,1)"
    a = L("(4,2):(2,1)")
    ainv = inverse(a)
    for x in range(8):
        assert ainv(a(x)) == x
        assert a(ainv(x)) == x


def test_inverse_rejects_non_bijection():
    with pytest.raises(NotInvertible):
        inverse(L("(4):(2)"))
    with pytest.raises(NotInvertible):
        inverse(L("(4):(0)"))


# ---------------------------------------------------------------- concat


def test_concat_structure():
    assert str(concat(L("(4):(2)"), L("(2):(1)"))) == "((4),(2)):((2),(1))"
    assert str(concat(L("(1):(0)"), L("(8):(1)"))) == "((1),(8)):((0),(1))"


def test_concat_builds_thread_value_layout():
    f = concat(L("(2,4):(8,1)"), L("(2,2):(4,16)"))
    assert str(f) == "((2,4),(2,2)):((8,1),(4,16))"
    assert f((2, 3)) == 21


def test_concat_evaluates_additively():
    a, b = L("(4):(2)"), L("(2):(1)")
    c = concat(a, b)
    for x in range(4):
        for y in range(2):
            assert c((x, y)) == a(x) + b(y)


# ---------------------------------------------------------------- restrict


def test_restrict_first_mode_golden():
    g = L("((4,8,2),(2,2,2)):((32,1,128),(16,8,256))")
    r = restrict_first_mode(g, 32)
    assert str(r) == "((4,8),(2,2,2)):((32,1),(16,8,256))"


def test_restrict_noop():
    a = L("((8),(2)):((1),(8))")
    assert restrict_first_mode(a, 8) == a


def test_restrict_splits_leaf():
    g = L("((4,8,2),(2,2,2)):((32,1,128),(16,8,256))")
    r = restrict_first_mode(g, 16)
    assert str(r) == "((4,4),(2,2,2)):((32,1),(16,8,256))"
    # Pointwise agreement with the original on the restricted domain.
    for t in range(16):
        for v in range(8):
            assert r((t, v)) == g((t, v))


def test_restrict_reports_dropped_leaves():
    g = L("((4,8,2),(2,2,2)):((32,1,128),(16,8,256))")
    _, dropped = restrict_mode_split(g, 0, 32)
    assert dropped == [(2, 128)]


def test_restrict_not_divisible():
    g = L("((4,8),(2,2)):((32,1),(16,8))")
    with pytest.raises(NotDivisible):
        restrict_first_mode(g, 6)


# ---------------------------------------------------------------- dim maps


def test_dim_restrict_identity():
    ident = Layout((16, 8), (1, 16))
    dm = dim_restrict(ident, 0, 0, (16, 8), (16, 8))
    assert str(dm) == "(16):(1)"


def test_dim_restrict_brute_force_oracle():
    composite = L("((8,2,2),(2,4)):((1,8,256),(16,32))")
    out_extents = (16, 32)
    for in_dim in (0, 1):
        for out_dim in (0, 1):
            dm = dim_restrict(composite, in_dim, out_dim, (32, 8), out_extents)
            extent = (32, 8)[in_dim]
            for x in range(extent):
                coord = (x, 0) if in_dim == 0 else (0, x)
                linear = composite(coord)
                decoded = (linear % 16, linear // 16)
                assert dm(x) == decoded[out_dim]


def test_dim_restrict_rejects_bad_rank():
    with pytest.raises(ShapeMismatch):
        dim_restrict(L("(4):(1)"), 0, 0, (2, 2), (2, 2))


# ---------------------------------------------------------------- properties


def _random_layout(rng, max_size=64):
    n = rng.randint(1, 3)
    shapes, strides = [], []
    total = 1
    for _ in range(n):
        s = rng.choice([1, 2, 3, 4, 8])
        if total * s > max_size:
            s = 1
        shapes.append(s)
        strides.append(rng.choice([0, 1, 2, 4, 8, 16]))
        total *= s
    return Layout(tuple(shapes), tuple(strides))


def test_coalesce_pointwise_random():
    rng = random.Random(7)
    for _ in range(300):
        a = _random_layout(rng)
        c = coalesce(a)
        assert c.size() == a.size()
        for i in range(a.size()):
            assert c(i) == a(i)


def test_inverse_round_trip_random_500():
    rng = random.Random(99)
    for _ in range(500):
        a = _random_bijective_layout(rng)
        ai = inverse(a)
        ident = coalesce(compose(a, ai))
        assert str(ident) == f"({a.size()}):(1)" or a.size() == 1
        assert inverse(ai) == coalesce(a)


def test_complement_bijectivity_random_200():
    rng = random.Random(1234)
    done = 0
    while done < 200:
        a = _random_bijective_layout(rng, max_size=32)
        mult = rng.choice([1, 2, 4])
        m = a.size() * mult * rng.choice([1, 2])
        if m > 4096:
            continue
        _assert_bijection_with_complement(a, m)
        done += 1


def test_evaluate_is_deterministic():
    f = L("((2,4),(2,2)):((8,1),(4,16))")
    assert [f(i) for i in range(32)] == [f(i) for i in range(32)]


def test_64_bit_overflow_is_checked():
    from tilesynth.errors import IntegerOverflow

    with pytest.raises(IntegerOverflow):
        Layout((2,), (2**63,))
    with pytest.raises(IntegerOverflow):
        Layout((2**64,), (1,))


def test_compose_preserves_deep_nesting():
    a = L("(64):(1)")
    b = L("((2,(2,2)),4):((1,(4,16)),2)")
    r = compose(a, b)
    # Structure of b survives; values match pointwise.
    assert r.rank == 2
    assert r.shape == b.shape
    for x in range(b.size()):
        assert r(x) == a(b(x))


def test_group_modes_regroups_flat_inverse():
    from tilesynth.layout import group_modes, inverse

    q_inv = L("((8,4),(2,4)):((4,64),(32,1))")
    q = inverse(q_inv)
    grouped = group_modes(q, (32, 8))
    assert grouped.rank == 2
    from tilesynth import inttuple as it

    assert it.size(grouped.shape[0]) == 32
    assert it.size(grouped.shape[1]) == 8
    for x in range(q.size()):
        assert grouped(x) == q(x)
