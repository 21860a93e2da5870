"""Program parsing, validation, dead code elimination, and partitioning."""

from pathlib import Path

import pytest

from tilesynth.errors import ParseError
from tilesynth.ir import (
    eliminate_dead_code,
    parse_dtype,
    parse_program,
    partition_components,
    print_program,
    validate,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def load(name: str) -> str:
    return (FIXTURES / name).read_text()


# ---------------------------------------------------------------- dtypes


def test_dtype_names():
    assert str(parse_dtype("float16")) == "float16"
    assert parse_dtype("int4").bits == 4
    assert parse_dtype("float8_e4m3").float_format == "e4m3"
    with pytest.raises(ParseError):
        parse_dtype("float24")


# ---------------------------------------------------------------- parsing


def test_parse_sample_gemm():
    g = parse_program(load("gemm_sample.prog"))
    assert len(g.ops) == 7
    scopes = [t.scope for t in g.tensors.values()]
    assert scopes.count("Global") == 3
    assert scopes.count("Shared") == 1
    assert scopes.count("Register") == 5
    # Loop body ops carry the trip count.
    gemm = next(op for op in g.ops if op.kind == "gemm")
    assert gemm.trip_count == 4
    store = g.ops[-1]
    assert store.kind == "copy" and store.trip_count == 1


def test_parse_empty_program():
    g = parse_program("# nothing here\n\n")
    assert g.ops == [] and g.tensors == {}


def test_parse_reports_line_numbers():
    with pytest.raises(ParseError) as exc:
        parse_program("x = register_tensor float16 (4,4)\ncopy x y\n")
    assert "line 2" in str(exc.value)


def test_parse_rejects_unknown_statement():
    with pytest.raises(ParseError):
        parse_program("frobnicate a b\n")


def test_parse_rejects_unterminated_loop():
    with pytest.raises(ParseError):
        parse_program("loop 2\n")


def test_annotation_attaches_to_op():
    g = parse_program(
        "a = register_tensor float16 (16,16)\n"
        "b = register_tensor float16 (16,16)\n"
        "c = register_tensor float32 (16,16)\n"
        "gemm c a b\n"
        "annotate 0 thread_arrangement (4,1):(1,4)\n"
    )
    assert str(g.ops[0].thread_arrangement) == "(4,1):(1,4)"


def test_annotation_index_out_of_range():
    with pytest.raises(ParseError):
        parse_program("annotate 3 thread_arrangement (1,1):(0,0)\n")


def test_print_parse_round_trip():
    g = parse_program(load("gemm_sample.prog"))
    text = print_program(g)
    g2 = parse_program(text)
    assert print_program(g2) == text
    assert [op.kind for op in g2.ops] == [op.kind for op in g.ops]
    assert [op.trip_count for op in g2.ops] == [op.trip_count for op in g.ops]


# ---------------------------------------------------------------- validate


def test_validate_sample_is_clean():
    g = parse_program(load("gemm_sample.prog"))
    assert validate(g) == []


def test_copy_shape_mismatch_diagnosed():
    g = parse_program(
        "a = register_tensor float16 (4,4)\n"
        "b = register_tensor float16 (4,8)\n"
        "copy a b\n"
    )
    diags = validate(g)
    assert any("shape mismatch" in d for d in diags)


def test_gemm_reduction_mismatch_names_both_tensors():
    g = parse_program(
        "a = register_tensor float16 (16,32)\n"
        "b = register_tensor float16 (8,16)\n"
        "c = register_tensor float32 (16,8)\n"
        "gemm c a b\n"
    )
    diags = validate(g)
    assert any("a" in d and "b" in d and "mismatch" in d for d in diags)


def test_use_before_def_diagnosed():
    g = parse_program(
        "r = register_tensor float16 (4,4)\n"
        "gin = global_view bin float16 (4,4):(4,1)\n"
        "gout = global_view bout float16 (4,4):(4,1)\n"
        "copy r gout\n"  # reads r before the copy that fills it
        "copy gin r\n"
    )
    diags = validate(g)
    assert any("before definition" in d for d in diags)


def test_reduce_dim_bounds_checked():
    g = parse_program(
        "a = register_tensor float32 (8,8)\n"
        "b = reduce a 5\n"
    )
    assert any("out of range" in d for d in validate(g))


def test_subbyte_pack_rule():
    g = parse_program("w = register_tensor int4 (1,64)\n")
    assert any("sub-byte" in d for d in validate(g))


# ---------------------------------------------------------------- dce


def test_dce_drops_unstored_chain():
    g = parse_program(
        "a = register_tensor float16 (4,4)\n"
        "g = global_view buf float16 (4,4):(4,1)\n"
        "b = cast a float32\n"  # dead: never reaches a global store
        "copy a g\n"
    )
    out = eliminate_dead_code(g)
    assert [op.kind for op in out.ops] == ["copy"]


def test_dce_keeps_live_producers():
    g = parse_program(load("gemm_sample.prog"))
    out = eliminate_dead_code(g)
    assert len(out.ops) == len(g.ops)


# ---------------------------------------------------------------- partition


def test_partition_sample_gemm():
    g = eliminate_dead_code(parse_program(load("gemm_sample.prog")))
    comps = partition_components(g)
    assert len(comps) == 2
    kinds = [[op.kind for op in comp] for comp in comps]
    # Loads, gemm, cast, store-to-shared together; shared read + global store apart.
    assert kinds[0] == ["copy", "copy", "gemm", "cast", "copy"]
    assert kinds[1] == ["copy", "copy"]
    # No component holds both the writer and a reader of the shared tensor.
    for comp in comps:
        writes = any(op.kind == "copy" and g.tensor(op.results[0]).scope == "Shared" for op in comp)
        reads = any(op.kind == "copy" and g.tensor(op.operands[0]).scope == "Shared" for op in comp)
        assert not (writes and reads)


def test_partition_single_chain():
    g = parse_program(
        "a = register_tensor float16 (4,4)\n"
        "g = global_view buf float16 (4,4):(4,1)\n"
        "b = elementwise relu a\n"
        "copy b g\n"
    )
    assert len(partition_components(g)) == 1


def test_partition_independent_copies():
    g = parse_program(
        "g1 = global_view b1 float16 (4,4):(4,1)\n"
        "g2 = global_view b2 float16 (4,4):(4,1)\n"
        "a = register_tensor float16 (4,4)\n"
        "b = register_tensor float16 (4,4)\n"
        "copy g1 a\n"
        "copy a g2\n"
        "copy g1 b\n"
        "copy b g2\n"
    )
    comps = partition_components(g)
    assert len(comps) == 2
    assert all(len(c) == 2 for c in comps)


def test_partition_covers_all_ops():
    g = eliminate_dead_code(parse_program(load("gemm_sample.prog")))
    comps = partition_components(g)
    seen = sorted(op.index for comp in comps for op in comp)
    assert seen == list(range(len(g.ops)))


@pytest.mark.parametrize(
    "fixture",
    ["gemm_sample.prog", "flash_pair.prog", "flash_conflict.prog", "mixed_int4.prog"],
)
def test_every_live_component_has_a_copy(fixture):
    g = eliminate_dead_code(parse_program(load(fixture)))
    for comp in partition_components(g):
        assert any(op.kind == "copy" for op in comp)


def test_rearrange_target_must_be_two_mode():
    g = parse_program(
        "a = register_tensor float16 (4,4)\n"
        "b = rearrange a (4,2,2):(1,4,8)\n"
    )
    assert any("two-mode" in d for d in validate(g))
