"""Analytical latency model: issue/completion tracking with RAW stalls.

A candidate is a sequence of operations.  Issuing operation k+1 costs
its per-thread invocation count times the instruction's issue cycles,
delayed until every in-flight producer of one of its inputs completes.
An operation completes ``completion_cycles`` after its issue finishes;
the total adds the residual completions of whatever is still in flight.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Set, Tuple

from .catalog import Catalog, Instruction
from .errors import NonDivisibleTile
from .ir import OpNode, ProgramGraph
from .synth import Candidate, RearrangePatch, SlotKey


@dataclass
class CostOp:
    """One issue step: reads/writes for RAW tracking plus its latency.

    ``replays`` models shared-memory bank-conflict serialization: an
    n-way conflicted access occupies the issue path n times.
    """

    label: str
    reads: Set[str]
    writes: Set[str]
    instruction: str
    invocations: int
    issue_cycles: int
    completion_cycles: int
    replays: int = 1

    @property
    def issue_total(self) -> int:
        return self.invocations * self.issue_cycles * self.replays


@dataclass
class OpCost:
    label: str
    instruction: str
    invocations: int
    issue: int
    stall: int
    start: int
    completes: int


@dataclass
class CostEstimate:
    total_cycles: int
    breakdown: List[OpCost] = field(default_factory=list)

    def render(self) -> List[str]:
        lines = [
            f"{c.label}: issue {c.issue} (x{c.invocations}), stall {c.stall}, "
            f"start {c.start}, completes {c.completes}"
            for c in self.breakdown
        ]
        lines.append(f"total {self.total_cycles}")
        return lines


# ---------------------------------------------------------------- invocations


def count_invocations(
    op: OpNode,
    candidate: Candidate,
    inst: Instruction,
    graph: ProgramGraph,
) -> int:
    """Per-thread instruction invocations, including loop trip counts."""
    if op.kind == "copy":
        slot: SlotKey = (op.index, "src")
        tv = candidate.layouts.get(slot) or candidate.layouts.get(op.operands[0])
        if tv is None:
            tv = candidate.layouts.get((op.index, "dst")) or candidate.layouts[op.results[0]]
        v_inst = inst.vector_elems(graph.tensor(op.operands[0]).dtype)
        if tv.values % v_inst != 0:
            raise NonDivisibleTile(
                f"op {op.index}: {tv.values} values/thread not divisible by "
                f"{v_inst}-element vectors"
            )
        return (tv.values // v_inst) * op.trip_count
    if op.kind == "gemm":
        a = graph.tensor(op.operands[0])
        b = graph.tensor(op.operands[1])
        m, k = a.shape
        n = b.shape[0]
        mi, ni, ki = inst.mnk
        c_tv = candidate.layouts[op.operands[2]]
        warps = c_tv.threads // 32
        num = m * n * k
        den = mi * ni * ki * warps
        if num % den != 0:
            raise NonDivisibleTile(f"op {op.index}: ragged matrix tiling")
        return (num // den) * op.trip_count
    # Register-file ops: one invocation per produced element per thread.
    out_tv = candidate.layouts[op.results[0]]
    return out_tv.values * op.trip_count


# ---------------------------------------------------------------- sequences


def _staging_ops(
    label: str,
    tensor: str,
    values: int,
    catalog: Catalog,
    candidate: Candidate,
    trip: int,
) -> List[CostOp]:
    """A redistribution is a store+load round trip through staging."""
    staging = candidate.staging.get(label)
    buf = f"<{label}>"
    steps: List[Tuple[str, int, int]] = []  # (instruction, invocations, replays)
    if staging is not None and len(staging.copies) == 2:
        for bc in staging.copies:
            inv = max(1, values // bc.vector_elems)
            steps.append(
                (bc.instruction, inv, staging.copy_conflicts.get(bc.op_index, 1))
            )
    else:
        # Conservative scalar round trip when no staging layout exists.
        steps = [("sts_16", values, 1), ("lds_16", values, 1)]
    out: List[CostOp] = []
    for i, (name, inv, replays) in enumerate(steps):
        inst = catalog.by_name.get(name)
        issue = inst.issue_cycles if inst else 2
        completion = inst.completion_cycles if inst else 22
        reads = {tensor} if i == 0 else {buf}
        writes = {buf} if i == 0 else {tensor}
        suffix = "store" if i == 0 else "load"
        out.append(
            CostOp(
                f"{label}.{suffix}", reads, writes, name,
                inv * trip, issue, completion, replays,
            )
        )
    return out


def cost_sequence(
    candidate: Candidate, graph: ProgramGraph, catalog: Catalog
) -> List[CostOp]:
    """The candidate's operations in program order, redistributions inline."""
    patches_by_op: Dict[int, List[RearrangePatch]] = {}
    for patch in candidate.patches:
        patches_by_op.setdefault(patch.op_index, []).append(patch)
    seq: List[CostOp] = []
    alu = catalog.alu()
    for op in graph.ops:
        for patch in patches_by_op.get(op.index, []):
            label = f"redistribute@{patch.op_index}:{patch.tensor}"
            seq.extend(
                _staging_ops(
                    label, patch.tensor, patch.to_layout.values, catalog,
                    candidate, op.trip_count,
                )
            )
        if op.kind == "rearrange":
            label = f"rearrange@{op.index}"
            out_tv = candidate.layouts.get(op.results[0])
            values = out_tv.values if out_tv else 1
            seq.extend(
                _staging_ops(
                    label, op.operands[0], values, catalog, candidate, op.trip_count
                )
            )
            seq.append(
                CostOp(
                    f"op{op.index}.rearrange", set(op.operands),
                    set(op.results), "register_move", 1, 1, 1,
                )
            )
            continue
        if op.kind == "copy":
            inst = candidate.choices.get(op.index)
            if inst is None:  # register-to-register move
                out_tv = candidate.layouts[op.results[0]]
                seq.append(
                    CostOp(
                        f"op{op.index}.copy", set(op.operands), set(op.results),
                        alu.name, out_tv.values * op.trip_count,
                        alu.issue_cycles, alu.completion_cycles,
                    )
                )
                continue
            inv = count_invocations(op, candidate, inst, graph)
            replays = 1
            for tensor in (op.operands[0], op.results[0]):
                smem = candidate.smem.get(tensor)
                if smem is not None:
                    replays = max(replays, smem.copy_conflicts.get(op.index, 1))
            seq.append(
                CostOp(
                    f"op{op.index}.copy", set(op.operands), set(op.results),
                    inst.name, inv, inst.issue_cycles, inst.completion_cycles,
                    replays,
                )
            )
        elif op.kind == "gemm":
            inst = candidate.choices[op.index]
            inv = count_invocations(op, candidate, inst, graph)
            seq.append(
                CostOp(
                    f"op{op.index}.gemm", set(op.operands), set(op.results),
                    inst.name, inv, inst.issue_cycles, inst.completion_cycles,
                )
            )
        else:  # cast, elementwise, reduce
            inv = count_invocations(op, candidate, alu, graph)
            seq.append(
                CostOp(
                    f"op{op.index}.{op.kind}", set(op.operands), set(op.results),
                    alu.name, inv, alu.issue_cycles, alu.completion_cycles,
                )
            )
    return seq


# ---------------------------------------------------------------- estimate


def estimate_sequence(seq: Sequence[CostOp]) -> CostEstimate:
    """Scan the sequence tracking issue time and in-flight completions."""
    clock = 0
    in_flight: List[Tuple[int, Set[str]]] = []  # (completes_at, writes)
    breakdown: List[OpCost] = []
    for op in seq:
        stall = 0
        for completes_at, writes in in_flight:
            if writes & op.reads and completes_at > clock:
                stall = max(stall, completes_at - clock)
        start = clock + stall
        clock = start + op.issue_total
        completes = clock + op.completion_cycles
        in_flight = [(t, w) for t, w in in_flight if t > clock]
        in_flight.append((completes, op.writes))
        breakdown.append(
            OpCost(
                op.label, op.instruction, op.invocations,
                op.issue_total, stall, start, completes,
            )
        )
    total = clock
    for completes_at, _ in in_flight:
        total = max(total, completes_at)
    return CostEstimate(total, breakdown)


def estimate(
    candidate: Candidate, graph: ProgramGraph, catalog: Catalog
) -> CostEstimate:
    est = estimate_sequence(cost_sequence(candidate, graph, catalog))
    candidate.cost = est
    return est


def rank(
    candidates: Sequence[Candidate], graph: ProgramGraph, catalog: Catalog
) -> List[Candidate]:
    """Ascending total cycles; ties keep depth-first discovery order."""
    for cand in candidates:
        if cand.cost is None:
            estimate(cand, graph, catalog)
    return sorted(candidates, key=lambda c: (c.cost.total_cycles, c.index))
