#!/usr/bin/env python3
"""Mixed-precision synthesis: fp16 activations times packed int4 weights.

The weight buffer is repacked offline so each thread's matrix fragment
is contiguous in memory.  Layout synthesis then keeps every weight copy
at 16 bytes and places the int4->fp16 cast entirely within threads: the
producer and consumer distributions come out identical, so no data
crosses lanes.
"""

from pathlib import Path

from tilesynth import (
    SynthesisConfig,
    builtin_catalog_path,
    load_catalog,
    parse_program,
    synthesize_program,
)

ROOT = Path(__file__).resolve().parent.parent
PROGRAM = ROOT / "fixtures" / "mixed_int4.prog"

print(PROGRAM.read_text())
print("-" * 72)

catalog = load_catalog(builtin_catalog_path("sm80"))
graph = parse_program(PROGRAM.read_text())
result = synthesize_program(
    graph, catalog, SynthesisConfig(threads=128, max_candidates=64)
)
assert result.ok, result.diagnostics
best = result.best

print("chosen instructions:")
for op in result.graph.ops:
    inst = best.choices.get(op.index)
    if inst is None:
        continue
    operands = " ".join(op.operands)
    if inst.category == "copy":
        elems = inst.vector_elems(result.graph.tensor(op.operands[0]).dtype)
        print(
            f"  op {op.index} ({op.kind} {operands}): {inst.name}, "
            f"{inst.vector_bytes} bytes = {elems} elements per thread"
        )
    else:
        print(f"  op {op.index} ({op.kind} {operands}): {inst.name}")

print("\nweight tensor distributions:")
print("  w4  (int4):", best.layouts["w4"].layout)
print("  w16 (fp16):", best.layouts["w16"].layout)
print("  identical:", best.layouts["w4"].same_function(best.layouts["w16"]))
print("  redistributions inserted:", len(best.patches))

smem = best.smem["sw"]
print("\nsynthesized shared weight layout:")
print(f"  {smem.layout} with {smem.swizzle}")
print(f"  bank conflicts per copy: {smem.copy_conflicts}")
print(f"\nmodeled latency: {best.cost.total_cycles} cycles")
