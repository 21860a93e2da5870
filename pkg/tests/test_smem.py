"""Layout constraints: construction, unification, materialization, TMA."""

import pytest

from tilesynth.errors import LayoutIncompatible, StrideConflict, Unsatisfiable
from tilesynth.layout import parse_layout
from tilesynth.smem import (
    BufferCopy,
    build_constraint,
    check_tma,
    materialize,
    parse_constraint,
    synthesize_buffer,
    unify,
)
from tilesynth.tv import TvLayout


def tv(text, tile):
    return TvLayout(parse_layout(text), tile)


# ---------------------------------------------------------------- build


def test_build_constraint_vectorized_load():
    """32 threads, 16-byte loads of a 64x64 half tile: the classic shape.

    Each thread holds an 8x16 local array; the 8-element runs pin an
    inner contiguous mode and everything else stays undetermined.
    """
    f = tv("((4,8),(8,2,8)):((8,64),(1,32,512))", (64, 64))
    c = build_constraint(f, 8, (64, 64))
    assert c.render() == "((8,8),64):((1,D1),D2)"


def test_build_constraint_scalar_is_fully_variable():
    f = tv("((4,8),(8,2,8)):((8,64),(1,32,512))", (64, 64))
    c = build_constraint(f, 1, (64, 64))
    assert c.render() == "(64,64):(D1,D2)"
    assert c.concrete_modes() == []


def test_build_constraint_rejects_non_invertible():
    # Thread mode with a duplicated stride cannot be inverted.
    f = tv("((4,8),(8,2,8)):((8,64),(1,8,512))", (64, 64))
    with pytest.raises(LayoutIncompatible):
        build_constraint(f, 8, (64, 64))


def test_build_constraint_filters_replicated_digits():
    # A warp-replicated access (stride-0 thread digit) still constrains
    # the buffer through its deduplicated part.
    f = tv(
        "((4,8,2,2),(2,2,2,2,4)):((128,1,16,0),(64,8,512,32,1024))", (64, 64)
    )
    c = build_constraint(f, 8, (64, 64))
    assert any(isinstance(d, int) for dim in c.splits for _, d in dim)


# ---------------------------------------------------------------- unify


def test_unify_refines_mode_case_1():
    c1 = parse_constraint("((8,8),64):((1,D1),D2)")
    c2 = parse_constraint("((8,2,4),64):((1,D3,8),D4)")
    u = unify(c1, c2)
    assert u.render() == "((8,2,4),64):((1,D1,8),D2)"
    # Commutative up to variable naming.
    assert unify(c2, c1).structure_key() == u.structure_key()


def test_unify_conflict_case_2():
    c1 = parse_constraint("((8,8),64):((1,D1),D2)")
    c2 = parse_constraint("(64,(8,8)):(D3,(1,D4))")
    with pytest.raises(StrideConflict):
        unify(c1, c2)


def test_unify_idempotent():
    c = parse_constraint("((8,2,4),64):((1,D1,8),D2)")
    assert unify(c, c).structure_key() == c.structure_key()


def test_unify_disagreeing_concrete_strides():
    c1 = parse_constraint("((8,8),64):((1,D1),D2)")
    c2 = parse_constraint("((8,8),64):((2,D3),D4)")
    with pytest.raises(StrideConflict):
        unify(c1, c2)


def test_unify_concrete_inputs_survive_pointwise():
    """Every determined mode of each input appears in the output."""
    c1 = parse_constraint("((8,8),64):((1,D1),D2)")
    c2 = parse_constraint("((8,2,4),64):((1,D3,8),D4)")
    u = unify(c1, c2)
    out_concrete = set(u.concrete_modes())
    for c in (c1, c2):
        for s, d in c.concrete_modes():
            # Modes may split; verify coverage by positions instead.
            covered = {k * dd for ss, dd in out_concrete for k in range(ss)}
            assert {k * d for k in range(s)} <= _address_span(u)


def _address_span(c):
    """All addresses reachable by determined digits of the constraint."""
    spans = [{0}]
    for s, d in c.concrete_modes():
        spans.append({k * d for k in range(s)})
    out = {0}
    for span in spans:
        out = {a + b for a in out for b in span}
    return out


# ---------------------------------------------------------------- materialize


def test_materialize_golden():
    c = parse_constraint("((8,2,4),64):((1,D1,8),D2)")
    m = materialize(c)
    assert str(m) == "((8,2,4),64):((1,32,8),64)"
    image = sorted(m(i) for i in range(4096))
    assert image == list(range(4096))


def test_materialize_fully_variable_is_bijective():
    c = parse_constraint("(64,64):(D1,D2)")
    m = materialize(c)
    # Innermost dimension fills first: the first-dim-fastest layout.
    assert str(m) == "(64,64):(1,64)"
    image = sorted(m(i) for i in range(4096))
    assert image == list(range(4096))


def test_materialize_respects_divisibility():
    c = parse_constraint("((8,8),64):((1,D1),D2)")
    # Force an unsatisfiable divisibility on the first variable.
    var = c.splits[0][1][1]
    var.divisibility = 12  # 8-aligned chain can never produce a 12-multiple
    with pytest.raises(Unsatisfiable):
        materialize(c)


def test_materialize_fills_chain_gaps():
    # Concrete modes (2:1) and (4:8) leave a gap of 4 to fill with a
    # variable of matching size.
    c = parse_constraint("((2,4,4),32):((1,D1,8),D2)")
    m = materialize(c)
    image = sorted(m(i) for i in range(sum([]) + 2 * 4 * 4 * 32))
    assert image == list(range(1024))


# ---------------------------------------------------------------- TMA


def test_tma_feasible_row_major():
    c = parse_constraint("((8,8),64):((1,D1),D2)")
    res = check_tma(c, 16)  # fp16
    assert res.feasible
    assert res.hint is not None


def test_tma_infeasible_narrow_run():
    c = parse_constraint("((2,32),64):((1,D1),D2)")  # 4-byte runs only
    res = check_tma(c, 16)
    assert not res.feasible
    assert "run" in res.reason


def test_tma_infeasible_too_many_dims():
    c = parse_constraint("(4,4,4,4,4,4):(D1,D2,D3,D4,D5,D6)")
    res = check_tma(c, 16)
    assert not res.feasible
    assert "dims" in res.reason


def test_tma_infeasible_big_extent():
    c = parse_constraint("((8,64),512):((1,D1),D2)")
    res = check_tma(c, 16)
    assert not res.feasible


# ---------------------------------------------------------------- buffers


def test_synthesize_buffer_write_read_pair():
    """A fragment-style writer and a coalesced reader share one layout."""
    writer = tv("((4,8,4),(2,2,8)):((128,1,16),(64,8,512))", (64, 64))
    reader = tv("((8,16),(8,4)):((512,1),(64,16))", (64, 64))
    out = synthesize_buffer(
        "buf", (64, 64), 16,
        [BufferCopy(0, writer, 2, "st_pair"), BufferCopy(1, reader, 8, "ld_row")],
    )
    image = sorted(out.layout(i) for i in range(4096))
    assert image == list(range(4096))
    assert out.copy_conflicts[0] == 1
    assert out.copy_conflicts[1] == 1
    assert out.identity_conflicts[1] > 1


def test_synthesize_buffer_single_scalar_copy():
    # Consecutive threads walk consecutive elements: already conflict-free,
    # so the identity swizzle wins the tie-break.
    access = tv("((32),(128)):((1),(32))", (64, 64))
    out = synthesize_buffer("buf", (64, 64), 16, [BufferCopy(0, access, 1, "scalar")])
    image = sorted(out.layout(i) for i in range(4096))
    assert image == list(range(4096))
    assert out.swizzle.is_identity
    assert out.copy_conflicts[0] == 1


def test_synthesize_buffer_incompatible_pair_fails():
    # Writer wants 8-element row runs; reader wants 8-element column runs.
    writer = tv("((8,16),(8,4)):((512,1),(64,16))", (64, 64))
    reader = tv("((8,16),(8,4)):((8,64),(1,1024))", (64, 64))
    with pytest.raises(StrideConflict):
        synthesize_buffer(
            "buf", (64, 64), 16,
            [BufferCopy(0, writer, 8, "w"), BufferCopy(1, reader, 8, "r")],
        )
