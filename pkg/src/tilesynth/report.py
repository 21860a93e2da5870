"""Machine- and human-readable reports over synthesis results.

The JSON schema (version 1) is stable and fully determined by the
inputs: two runs over identical files produce byte-identical reports.

    version: int
    arch: str
    threads: int
    program: {ops: int, tensors: {name: {scope, dtype, shape}}}
    candidates: {count: int, costs: [int]}
    best: {
        index: int
        total_cycles: int
        tensors: {name: {tv, tile}}
        copies: [{op, instruction, vector_bytes, conflicts, identity_conflicts}]
        buffers: {name: {layout, swizzle, conflicts, identity_conflicts}}
        redistributions: [{op, tensor, from, to}]
        cost: [{label, instruction, invocations, issue, stall, start, completes}]
    }
    diagnostics: [str]
"""

from __future__ import annotations

import json
from typing import Dict, List, Optional

from .errors import UnknownOp
from .ir import OpNode
from .layout import compose, dim_restrict, group_modes, inverse
from .pipeline import SynthesisResult
from .smem import build_constraint
from .synth import Candidate, restrict_tv

SCHEMA_VERSION = 1


def _candidate_section(result: SynthesisResult, cand: Candidate) -> Dict:
    graph = result.graph
    tensors = {}
    for name, decl in sorted(graph.tensors.items()):
        if name in cand.layouts:
            tv = cand.layouts[name]
            tensors[name] = {"tv": str(tv.layout), "tile": list(tv.tile)}
    copies = []
    for op in graph.ops:
        if op.kind != "copy" or op.index not in cand.choices:
            continue
        inst = cand.choices[op.index]
        if inst.category != "copy":
            continue
        entry = {
            "op": op.index,
            "instruction": inst.name,
            "vector_bytes": inst.vector_bytes,
        }
        for tensor in (op.operands[0], op.results[0]):
            if graph.tensor(tensor).scope == "Shared" and tensor in cand.smem:
                smem = cand.smem[tensor]
                entry["conflicts"] = smem.copy_conflicts.get(op.index)
                entry["identity_conflicts"] = smem.identity_conflicts.get(op.index)
        copies.append(entry)
    buffers = {}
    for name, smem in sorted(cand.smem.items()):
        buffers[name] = {
            "layout": str(smem.layout),
            "swizzle": str(smem.swizzle),
            "conflicts": {str(k): v for k, v in sorted(smem.copy_conflicts.items())},
            "identity_conflicts": {
                str(k): v for k, v in sorted(smem.identity_conflicts.items())
            },
        }
    for name, smem in sorted(cand.staging.items()):
        buffers[name] = {
            "layout": str(smem.layout),
            "swizzle": str(smem.swizzle),
            "conflicts": {str(k): v for k, v in sorted(smem.copy_conflicts.items())},
            "identity_conflicts": {
                str(k): v for k, v in sorted(smem.identity_conflicts.items())
            },
        }
    redistributions = [
        {
            "op": p.op_index,
            "tensor": p.tensor,
            "from": str(p.from_layout.layout),
            "to": str(p.to_layout.layout),
        }
        for p in cand.patches
    ]
    cost = [
        {
            "label": c.label,
            "instruction": c.instruction,
            "invocations": c.invocations,
            "issue": c.issue,
            "stall": c.stall,
            "start": c.start,
            "completes": c.completes,
        }
        for c in cand.cost.breakdown
    ]
    return {
        "index": cand.index,
        "total_cycles": cand.cost.total_cycles,
        "tensors": tensors,
        "copies": copies,
        "buffers": buffers,
        "redistributions": redistributions,
        "cost": cost,
    }


def build_report(result: SynthesisResult, all_candidates: bool = False) -> Dict:
    graph = result.graph
    report: Dict = {
        "version": SCHEMA_VERSION,
        "arch": result.catalog.arch,
        "threads": result.config.threads,
        "program": {
            "ops": len(graph.ops),
            "tensors": {
                name: {
                    "scope": d.scope,
                    "dtype": str(d.dtype),
                    "shape": list(d.shape),
                }
                for name, d in sorted(graph.tensors.items())
            },
        },
        "diagnostics": list(result.diagnostics),
    }
    report["candidates"] = {
        "count": len(result.candidates),
        "costs": [c.cost.total_cycles for c in result.candidates],
    }
    if result.best is not None:
        report["best"] = _candidate_section(result, result.best)
    if all_candidates:
        report["all"] = [
            _candidate_section(result, c) for c in result.candidates
        ]
    return report


def render_json(report: Dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def render_text(report: Dict) -> str:
    lines: List[str] = []
    lines.append(f"arch {report['arch']}, {report['threads']} threads")
    lines.append(
        f"program: {report['program']['ops']} ops, "
        f"{len(report['program']['tensors'])} tensors"
    )
    if report["diagnostics"]:
        lines.append("diagnostics:")
        lines.extend(f"  {d}" for d in report["diagnostics"])
    cands = report["candidates"]
    lines.append(f"candidates: {cands['count']} valid, costs {cands['costs']}")
    best = report.get("best")
    if best:
        lines.append(f"best candidate #{best['index']}: {best['total_cycles']} cycles")
        lines.append("  register/tensor layouts:")
        for name, info in best["tensors"].items():
            lines.append(f"    {name}: {info['tv']} over {tuple(info['tile'])}")
        if best["copies"]:
            lines.append("  copies:")
            for c in best["copies"]:
                extra = ""
                if "conflicts" in c:
                    extra = (
                        f", conflicts {c['conflicts']} "
                        f"(identity {c['identity_conflicts']})"
                    )
                lines.append(
                    f"    op {c['op']}: {c['instruction']} "
                    f"({c['vector_bytes']}B){extra}"
                )
        if best["buffers"]:
            lines.append("  shared buffers:")
            for name, b in best["buffers"].items():
                lines.append(f"    {name}: {b['layout']} (+) {b['swizzle']}")
        if best["redistributions"]:
            lines.append("  redistributions:")
            for r in best["redistributions"]:
                lines.append(
                    f"    op {r['op']}: {r['tensor']} {r['from']} -> {r['to']}"
                )
        lines.append("  cost breakdown:")
        for c in best["cost"]:
            lines.append(
                f"    {c['label']} [{c['instruction']} x{c['invocations']}]: "
                f"issue {c['issue']}, stall {c['stall']}, "
                f"start {c['start']}, completes {c['completes']}"
            )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- explain


def explain_op(result: SynthesisResult, op_index: int) -> str:
    """Trace the constraints touching one operation in the best candidate."""
    graph = result.graph
    if not 0 <= op_index < len(graph.ops):
        raise UnknownOp(f"op index {op_index} out of range (0..{len(graph.ops) - 1})")
    cand = result.best
    if cand is None:
        return "no valid candidate to explain"
    op = graph.ops[op_index]
    lines = [f"op {op_index}: {op.kind} " + " ".join(op.operands + ["->"] + op.results)]
    if op.kind == "gemm":
        lines.extend(_explain_gemm(graph, cand, op))
    elif op.kind == "copy":
        lines.extend(_explain_copy(graph, cand, op))
    elif op.kind == "reduce":
        f = cand.layouts[op.operands[0]]
        g = cand.layouts[op.results[0]]
        lines.append(f"  input  {op.operands[0]}: {f.layout}")
        lines.append(f"  output {op.results[0]}: {g.layout}")
        lines.append(f"  rule: collapse dimension {op.reduce_dim} of the input map")
    elif op.kind in ("cast", "elementwise"):
        for t in op.operands + op.results:
            lines.append(f"  {t}: {cand.layouts[t].layout}")
        lines.append("  rule: all operands share one thread-value layout")
    else:
        lines.append("  redistribution step (no layout constraint)")
    return "\n".join(lines) + "\n"


def _instruction_composites(tv, inst_tv):
    restricted, _, _ = restrict_tv(tv, inst_tv.threads, inst_tv.values)
    tile_inverse = group_modes(inverse(inst_tv.layout), inst_tv.tile)
    return compose(restricted.layout, tile_inverse)


def _explain_gemm(graph, cand: Candidate, op: OpNode) -> List[str]:
    inst = cand.choices[op.index]
    a, b, c = (cand.layouts[n] for n in op.operands)
    pa, pb, pc = inst.mma_layouts()
    mi, ni, ki = inst.mnk
    comp_a = _instruction_composites(a, pa)
    comp_b = _instruction_composites(b, pb)
    comp_c = _instruction_composites(c, pc)
    m, k = graph.tensor(op.operands[0]).shape
    n = graph.tensor(op.operands[1]).shape[0]
    lines = [f"  instruction {inst.name} tile {mi}x{ni}x{ki}"]
    eqs = [
        ("rows", comp_c, 0, 0, (mi, ni), (m, n), comp_a, 0, 0, (mi, ki), (m, k)),
        ("cols", comp_c, 1, 1, (mi, ni), (m, n), comp_b, 0, 0, (ni, ki), (n, k)),
        ("reduction", comp_a, 1, 1, (mi, ki), (m, k), comp_b, 1, 1, (ni, ki), (n, k)),
    ]
    for label, lc, lin, lout, lie, loe, rc, rin, rout, rie, roe in eqs:
        left = dim_restrict(lc, lin, lout, lie, loe)
        right = dim_restrict(rc, rin, rout, rie, roe)
        ok = "ok" if left.equivalent(right) else "MISMATCH"
        lines.append(f"  {label}: {left} == {right}  [{ok}]")
    return lines


def _explain_copy(graph, cand: Candidate, op: OpNode) -> List[str]:
    lines = []
    inst = cand.choices.get(op.index)
    src, dst = op.operands[0], op.results[0]
    src_decl, dst_decl = graph.tensor(src), graph.tensor(dst)
    from .synth import slot_for

    f = cand.layouts[slot_for(graph, op, src)]
    g = cand.layouts[slot_for(graph, op, dst)]
    lines.append(f"  source {src}: {f.layout}")
    lines.append(f"  dest   {dst}: {g.layout}")
    if inst is None:
        lines.append("  register move: source and destination layouts equal")
        return lines
    p, q = inst.copy_layouts(src_decl.dtype)
    lines.append(f"  instruction {inst.name}: p={p.layout}, q={q.layout}")
    lines.append("  rule: f composed with inverse(p) == g composed with inverse(q)")
    for tensor, decl, tv in ((src, src_decl, f), (dst, dst_decl, g)):
        if decl.scope == "Shared":
            v = inst.vector_elems(decl.dtype)
            constraint = build_constraint(tv, v, decl.shape)
            lines.append(f"  {tensor} layout constraint: {constraint}")
            if tensor in cand.smem:
                smem = cand.smem[tensor]
                lines.append(f"  unified constraint: {smem.constraint}")
                lines.append(f"  materialized: {smem.layout} (+) {smem.swizzle}")
    return lines
