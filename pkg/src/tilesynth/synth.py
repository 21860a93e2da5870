"""Thread-value layout synthesis over tile programs.

Per connected component, anchor operations fix initial layouts (matrix
ops via fragment tiling, otherwise the biggest global copy via access
coalescing).  A ready queue then solves each remaining constraint once
only one layout is unknown.  Conflicting demands on a register tensor
insert redistribution steps.  Instruction choices for copies expand into
a depth-first search tree; each surviving leaf is a candidate program.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .catalog import Catalog, Instruction, candidates_for_copy, fastest_mma
from .errors import (
    LayoutIncompatible,
    NoInstructionAvailable,
    NonDivisibleTile,
    NotDivisible,
    NotInvertible,
    OutOfDomain,
    ShapeMismatch,
    StrideConflict,
    Unsatisfiable,
    UnsolvedResidual,
)
from .ir import OpNode, ProgramGraph, TensorDecl, partition_components
from .layout import Layout, compose, inverse
from .smem import BufferCopy, SmemLayout, synthesize_buffer
from .tv import TvLayout, restrict_tv, tv_from_mode_lists

SlotKey = Union[str, Tuple[int, str]]

_PRUNE_ERRORS = (
    LayoutIncompatible,
    NonDivisibleTile,
    NotDivisible,
    NotInvertible,
    OutOfDomain,
    ShapeMismatch,
    StrideConflict,
    Unsatisfiable,
    NoInstructionAvailable,
)


@dataclass
class SynthesisConfig:
    threads: int = 128
    max_candidates: int = 64

    def __post_init__(self):
        if self.threads % 32 != 0 or self.threads < 32:
            raise ValueError("thread count must be a positive multiple of 32")

    @property
    def warps(self) -> int:
        return self.threads // 32


@dataclass
class RearrangePatch:
    """A register redistribution inserted at a conflict edge."""

    op_index: int  # the op whose view of the tensor is converted
    tensor: str
    from_layout: TvLayout
    to_layout: TvLayout
    inserted: bool = True  # False for user-written rearrange ops


@dataclass
class TvConstraint:
    kind: str  # "copy" | "elem" | "reduce"
    op: OpNode
    slots: List[SlotKey]
    tensors: List[str]  # tensor name per slot
    solved: bool = False


@dataclass
class Candidate:
    index: int
    choices: Dict[int, Instruction]
    layouts: Dict[SlotKey, TvLayout]
    patches: List[RearrangePatch]
    smem: Dict[str, SmemLayout]
    staging: Dict[str, SmemLayout] = field(default_factory=dict)
    cost: Optional[object] = None


# ---------------------------------------------------------------- helpers


def slot_for(graph: ProgramGraph, op: OpNode, tensor: str) -> SlotKey:
    decl = graph.tensor(tensor)
    if decl.scope == "Register":
        return tensor
    side = "src" if tensor in op.operands else "dst"
    if op.kind == "copy" and tensor == op.operands[0]:
        side = "src"
    elif op.kind == "copy":
        side = "dst"
    return (op.index, side)


def _flat(layout: Layout, mode: int) -> List[Tuple[int, int]]:
    return layout.mode(mode).flat_modes()


def _logical_weights(shape: Tuple[int, ...]) -> List[int]:
    out, w = [], 1
    for s in shape:
        out.append(w)
        w *= s
    return out


# ---------------------------------------------------------------- anchors


def coalesced_access_layout(
    decl: TensorDecl,
    memory_layout: Optional[Layout],
    threads: int,
    vector_elems: int,
) -> TvLayout:
    """Access distribution that walks memory in ascending address order.

    Dimensions are visited smallest-stride first; each thread owns
    ``vector_elems`` contiguous elements and consecutive threads own
    consecutive vectors.  Leftover iterations cycle after all threads.
    """
    extents = decl.shape
    total = decl.elems
    if memory_layout is None:
        memory_layout = Layout(extents, tuple(_logical_weights(extents)))
    flat = memory_layout.flat_modes()
    weights = []
    w = 1
    for s, _ in flat:
        weights.append(w)
        w *= s
    order = sorted(range(len(flat)), key=lambda i: (flat[i][1], i))
    rank_to_logical = Layout(
        tuple(flat[i][0] for i in order),
        tuple(weights[i] for i in order),
    )
    # Longest memory-contiguous run starting at stride 1.
    run = 1
    for i in order:
        s, d = flat[i]
        if s == 1:
            continue
        if d == run:
            run *= s
        else:
            break
    if vector_elems > run or run % vector_elems != 0:
        raise LayoutIncompatible(
            f"vector of {vector_elems} elements does not divide the "
            f"contiguous run of {run} in {decl.name}"
        )
    if total % (vector_elems * threads) != 0:
        raise NonDivisibleTile(
            f"{decl.name}: {total} elements not divisible by "
            f"{threads} threads x {vector_elems}-element vectors"
        )
    reps = total // (vector_elems * threads)
    rank_map = Layout(
        ((threads,), (vector_elems, reps)),
        ((vector_elems,), (1, vector_elems * threads)),
    )
    return TvLayout(compose(rank_to_logical, rank_map), extents)


def _warp_grid(
    op: OpNode, warps: int, rm: int, rn: int
) -> Tuple[int, int, Layout]:
    """Warp-grid extents and the grid-coordinate -> warp-id layout."""
    if op.thread_arrangement is not None:
        arr = op.thread_arrangement
        if arr.rank != 2:
            raise ShapeMismatch("thread arrangement must have two modes")
        wm = math.prod(s for s, _ in arr.mode(0).flat_modes())
        wn = math.prod(s for s, _ in arr.mode(1).flat_modes())
        if wm * wn != warps:
            raise NonDivisibleTile(
                f"thread arrangement uses {wm * wn} warps, have {warps}"
            )
        grid = arr
    else:
        wm = math.gcd(warps, rm)
        wn = warps // wm
        grid = Layout((wm, wn), (1, wm))
    if rm % wm != 0 or rn % wn != 0:
        raise NonDivisibleTile(
            f"warp grid {wm}x{wn} does not divide the {rm}x{rn} tile grid"
        )
    return wm, wn, grid


def init_gemm_anchor(
    op: OpNode, graph: ProgramGraph, inst: Instruction, config: SynthesisConfig
) -> Dict[str, TvLayout]:
    """Tile the output with the instruction's fragments; derive inputs.

    Warps lay along the first (row) dimension fastest unless an
    annotation overrides the grid.  Per-thread repeats go to the value
    mode: row repeats, then column/reduction repeats.
    """
    a, b, c = (graph.tensor(n) for n in op.operands)
    M, K = a.shape
    N = b.shape[0]
    MI, NI, KI = inst.mnk
    if M % MI or N % NI or K % KI:
        raise NonDivisibleTile(
            f"gemm {M}x{N}x{K} not divisible by instruction tile {MI}x{NI}x{KI}"
        )
    rm, rn, kreps = M // MI, N // NI, K // KI
    wm, wn, grid = _warp_grid(op, config.warps, rm, rn)
    warp_to_grid = inverse(grid)  # warp id -> grid linear (wm fastest)

    pa, pb, pc = inst.mma_layouts()

    def fragment(tv: TvLayout, extents: Tuple[int, int]) -> Layout:
        embed = Layout(tv.tile, (1, extents[0]))
        return compose(embed, tv.layout)

    def warp_modes(row_step: int, col_step: int) -> List[Tuple[int, int]]:
        placed = compose(Layout((wm, wn), (row_step, col_step)), warp_to_grid)
        return placed.flat_modes()

    fc = fragment(pc, (M, N))
    fa = fragment(pa, (M, K))
    fb = fragment(pb, (N, K))

    c_tv = tv_from_mode_lists(
        _flat(fc, 0) + warp_modes(MI, M * NI),
        _flat(fc, 1) + [(rm // wm, MI * wm), (rn // wn, M * NI * wn)],
        (M, N),
    )
    a_tv = tv_from_mode_lists(
        _flat(fa, 0) + warp_modes(MI, 0),
        _flat(fa, 1) + [(rm // wm, MI * wm), (kreps, M * KI)],
        (M, K),
    )
    b_tv = tv_from_mode_lists(
        _flat(fb, 0) + warp_modes(0, NI),
        _flat(fb, 1) + [(rn // wn, NI * wn), (kreps, N * KI)],
        (N, K),
    )
    return {op.operands[0]: a_tv, op.operands[1]: b_tv, op.operands[2]: c_tv}


# ---------------------------------------------------------------- solving


def solve_copy(
    known: TvLayout, inst: Instruction, dtype, known_is_src: bool
) -> TvLayout:
    """Derive the other side of a copy from one side and the instruction.

    The known side restricted to one instruction tile composes with the
    instruction's inverse layout and the other operand's layout; digits
    beyond the instruction tile (warp groups, outer iterations) carry
    over unchanged.
    """
    p_src, q_dst = inst.copy_layouts(dtype)
    known_inst, other_inst = (p_src, q_dst) if known_is_src else (q_dst, p_src)
    ti, vi = known_inst.threads, known_inst.values
    if known.threads < ti or known.threads % ti != 0:
        raise LayoutIncompatible(
            f"{inst.name} needs {ti} threads; layout has {known.threads}"
        )
    if known.values < vi or known.values % vi != 0:
        raise LayoutIncompatible(
            f"{inst.name} moves {vi} values/thread; layout has {known.values}"
        )
    try:
        restricted, dropped_t, dropped_v = restrict_tv(known, ti, vi)
        composite = compose(restricted.layout, inverse(known_inst.layout))
        inner = compose(composite, other_inst.layout)
    except (NotDivisible, NotInvertible, OutOfDomain) as e:
        raise LayoutIncompatible(str(e)) from e
    return tv_from_mode_lists(
        _flat(inner, 0) + dropped_t,
        _flat(inner, 1) + dropped_v,
        known.tile,
    )


def reduce_projection(extents: Tuple[int, ...], dim: int) -> Layout:
    """Collapse one dimension: input linear index -> output linear index."""
    out_extents = tuple(1 if i == dim else e for i, e in enumerate(extents))
    weights = _logical_weights(out_extents)
    strides = tuple(0 if i == dim else weights[i] for i in range(len(extents)))
    return Layout(extents, strides)


def solve_reduce(f: TvLayout, dim: int) -> TvLayout:
    mu = reduce_projection(f.tile, dim)
    out_extents = tuple(1 if i == dim else e for i, e in enumerate(f.tile))
    return TvLayout(compose(mu, f.layout), out_extents)


# ---------------------------------------------------------------- propagate


def build_constraints(
    component: Sequence[OpNode], graph: ProgramGraph
) -> List[TvConstraint]:
    """Constraint records per op: one per copy/element/reduce, three per
    matrix op (rows, columns, reduction dimension)."""
    out: List[TvConstraint] = []
    for op in component:
        if op.kind == "gemm":
            a, b, c = op.operands
            for kind, pair in (
                ("gemm_rows", (c, a)),
                ("gemm_cols", (c, b)),
                ("gemm_red", (a, b)),
            ):
                out.append(TvConstraint(kind, op, list(pair), list(pair)))
        elif op.kind == "copy":
            src, dst = op.operands[0], op.results[0]
            both_register = (
                graph.tensor(src).scope == "Register"
                and graph.tensor(dst).scope == "Register"
            )
            kind = "elem" if both_register else "copy"
            out.append(
                TvConstraint(
                    kind,
                    op,
                    [slot_for(graph, op, src), slot_for(graph, op, dst)],
                    [src, dst],
                )
            )
        elif op.kind in ("cast", "elementwise"):
            tensors = op.operands + op.results
            out.append(
                TvConstraint(
                    "elem", op, [slot_for(graph, op, t) for t in tensors], tensors
                )
            )
        elif op.kind == "reduce":
            tensors = [op.operands[0], op.results[0]]
            out.append(
                TvConstraint(
                    "reduce", op, [slot_for(graph, op, t) for t in tensors], tensors
                )
            )
    return out


class PropagationState:
    def __init__(self, graph: ProgramGraph, config: SynthesisConfig):
        self.graph = graph
        self.config = config
        self.layouts: Dict[SlotKey, TvLayout] = {}
        self.patches: List[RearrangePatch] = []
        self._patch_map: Dict[Tuple[int, str], TvLayout] = {}

    def effective(self, slot: SlotKey, tensor: str, op: OpNode) -> TvLayout:
        patched = self._patch_map.get((op.index, tensor))
        if patched is not None:
            return patched
        return self.layouts[slot]

    def assign(
        self, slot: SlotKey, tensor: str, layout: TvLayout, op: OpNode
    ) -> None:
        current = self.layouts.get(slot)
        if current is None:
            self.layouts[slot] = layout
            return
        if current.same_function(layout):
            return
        # Conflict: this op's view of the tensor is redistributed.
        patch = RearrangePatch(op.index, tensor, current, layout)
        self.patches.append(patch)
        self._patch_map[(op.index, tensor)] = layout


def _anchor_copy(
    component: Sequence[OpNode], graph: ProgramGraph
) -> Tuple[OpNode, str, Optional[Layout]]:
    """The copy that moves the most data, preferring global-backed ones."""
    best = None
    for op in component:
        if op.kind != "copy":
            continue
        src, dst = graph.tensor(op.operands[0]), graph.tensor(op.results[0])
        global_side = None
        if src.scope == "Global":
            global_side = op.operands[0]
        elif dst.scope == "Global":
            global_side = op.results[0]
        moved = src.bytes
        key = (0 if global_side else 1, -moved, op.index)
        if best is None or key < best[0]:
            best = (key, op, global_side)
    if best is None:
        raise UnsolvedResidual("component has no copy to anchor")
    _, op, global_side = best
    if global_side is None:
        anchor_tensor = op.operands[0]
        return op, anchor_tensor, None
    return op, global_side, graph.tensor(global_side).layout


def propagate(
    component: Sequence[OpNode],
    graph: ProgramGraph,
    choices: Dict[int, Instruction],
    config: SynthesisConfig,
    catalog: Catalog,
    state: PropagationState,
    constraint_order: Optional[Sequence[int]] = None,
) -> None:
    """Algorithm core: seed anchors, then fixpoint over a ready queue."""
    constraints = build_constraints(component, graph)
    if constraint_order is not None:
        constraints = [constraints[i] for i in constraint_order]

    gemms = [op for op in component if op.kind == "gemm"]
    if gemms:
        for op in gemms:
            a, b, c = (graph.tensor(n) for n in op.operands)
            inst = choices.get(op.index) or fastest_mma(
                catalog, a.dtype, b.dtype, c.dtype
            )
            choices[op.index] = inst
            for tensor, tv in init_gemm_anchor(op, graph, inst, config).items():
                state.assign(tensor, tensor, tv, op)
    else:
        op, anchor_tensor, memory_layout = _anchor_copy(component, graph)
        decl = graph.tensor(anchor_tensor)
        inst = choices.get(op.index)
        vector = inst.vector_elems(decl.dtype) if inst else 1
        tv = coalesced_access_layout(decl, memory_layout, config.threads, vector)
        state.assign(slot_for(graph, op, anchor_tensor), anchor_tensor, tv, op)

    # Seed user-provided redistribution targets.
    for op in component:
        if op.kind == "rearrange" and op.rearrange_target is not None:
            decl = graph.tensor(op.results[0])
            state.assign(
                op.results[0],
                op.results[0],
                TvLayout(op.rearrange_target, decl.shape),
                op,
            )

    pending = [c for c in constraints if not c.solved]
    progress = True
    while pending and progress:
        progress = False
        queue = [
            c
            for c in pending
            if sum(1 for s in c.slots if s not in state.layouts) == 1
            or all(s in state.layouts for s in c.slots)
        ]
        for c in queue:
            _solve_constraint(c, graph, choices, state)
            c.solved = True
            progress = True
        pending = [c for c in pending if not c.solved]
    if pending:
        names = ", ".join(
            f"op {c.op.index} ({c.op.kind})" for c in pending
        )
        raise UnsolvedResidual(
            f"constraints left unsolved (no anchor reaches them): {names}"
        )


def _solve_constraint(
    c: TvConstraint,
    graph: ProgramGraph,
    choices: Dict[int, Instruction],
    state: PropagationState,
) -> None:
    if c.kind.startswith("gemm"):
        # Matrix constraints are discharged by the anchor's construction;
        # reaching here with every operand known marks them solved.
        return
    known_idx = next(
        (i for i, s in enumerate(c.slots) if s in state.layouts), None
    )
    if known_idx is None:
        raise UnsolvedResidual(f"op {c.op.index}: no known layout to solve from")
    known = state.effective(c.slots[known_idx], c.tensors[known_idx], c.op)
    if c.kind == "elem":
        for slot, tensor in zip(c.slots, c.tensors):
            tv = TvLayout(known.layout, graph.tensor(tensor).shape)
            state.assign(slot, tensor, tv, c.op)
        return
    if c.kind == "copy":
        inst = choices.get(c.op.index)
        if inst is None:
            raise NoInstructionAvailable(
                f"op {c.op.index}: no instruction chosen for copy"
            )
        known_is_src = known_idx == 0
        dtype = graph.tensor(c.tensors[known_idx]).dtype
        solved = solve_copy(known, inst, dtype, known_is_src)
        other = 1 - known_idx
        tv = TvLayout(solved.layout, graph.tensor(c.tensors[other]).shape)
        state.assign(c.slots[other], c.tensors[other], tv, c.op)
        return
    if c.kind == "reduce":
        if c.slots[0] not in state.layouts:
            raise UnsolvedResidual(
                f"op {c.op.index}: reduction input has no layout; reductions "
                "solve forward only"
            )
        f = state.effective(c.slots[0], c.tensors[0], c.op)
        g = solve_reduce(f, c.op.reduce_dim)
        state.assign(c.slots[1], c.tensors[1], g, c.op)
        return
    raise UnsolvedResidual(f"unknown constraint kind {c.kind}")


# ---------------------------------------------------------------- search


def _copy_choice_points(
    graph: ProgramGraph, catalog: Catalog
) -> List[Tuple[OpNode, List[Instruction]]]:
    points = []
    for op in graph.ops:
        if op.kind != "copy":
            continue
        src, dst = graph.tensor(op.operands[0]), graph.tensor(op.results[0])
        if src.scope == "Register" and dst.scope == "Register":
            continue
        points.append((op, candidates_for_copy(catalog, src, dst)))
    return points


def evaluate_assignment(
    graph: ProgramGraph,
    catalog: Catalog,
    config: SynthesisConfig,
    choices: Dict[int, Instruction],
) -> Tuple[Dict[int, Instruction], Dict[SlotKey, TvLayout], List[RearrangePatch], Dict[str, SmemLayout], Dict[str, SmemLayout]]:
    """Propagate layouts and synthesize every shared buffer for one leaf.

    ``choices`` is completed in place with the matrix instructions the
    anchors select; the completed dict is returned with the results.
    """
    state = PropagationState(graph, config)
    for component in partition_components(graph):
        propagate(component, graph, choices, config, catalog, state)
    smem = _synthesize_shared(graph, choices, state)
    staging = _synthesize_staging(graph, catalog, config, state)
    return choices, state.layouts, state.patches, smem, staging


def _synthesize_shared(
    graph: ProgramGraph,
    choices: Dict[int, Instruction],
    state: PropagationState,
) -> Dict[str, SmemLayout]:
    buffers: Dict[str, List[BufferCopy]] = {}
    for op in graph.ops:
        if op.kind != "copy":
            continue
        for tensor, side in ((op.operands[0], "src"), (op.results[0], "dst")):
            decl = graph.tensor(tensor)
            if decl.scope != "Shared":
                continue
            inst = choices[op.index]
            access = state.layouts[(op.index, side)]
            buffers.setdefault(tensor, []).append(
                BufferCopy(
                    op.index,
                    access,
                    inst.vector_elems(decl.dtype),
                    inst.name,
                )
            )
    out = {}
    for name, copies in sorted(buffers.items()):
        decl = graph.tensor(name)
        out[name] = synthesize_buffer(name, decl.shape, decl.dtype.bits, copies)
    return out


def _staging_instructions(
    catalog: Catalog, decl: TensorDecl
) -> List[Tuple[Instruction, Instruction]]:
    """(store, load) pairs for a register redistribution, widest first."""
    shared = TensorDecl("staging", "Shared", decl.dtype, decl.shape)
    stores = candidates_for_copy(catalog, decl, shared)
    loads = candidates_for_copy(catalog, shared, decl)
    loads_by_width: Dict[int, Instruction] = {}
    for inst in loads:
        if inst.generic and inst.vector_bytes not in loads_by_width:
            loads_by_width[inst.vector_bytes] = inst
    pairs = []
    for st in stores:
        if st.vector_bytes in loads_by_width:
            pairs.append((st, loads_by_width[st.vector_bytes]))
    return pairs


def _synthesize_staging(
    graph: ProgramGraph,
    catalog: Catalog,
    config: SynthesisConfig,
    state: PropagationState,
) -> Dict[str, SmemLayout]:
    """Staging buffers for user rearranges and inserted conflict patches."""
    jobs: List[Tuple[str, str, TvLayout, TvLayout]] = []
    for op in graph.ops:
        if op.kind == "rearrange":
            src = op.operands[0]
            dst = op.results[0]
            if src in state.layouts and dst in state.layouts:
                jobs.append(
                    (f"rearrange@{op.index}", src, state.layouts[src], state.layouts[dst])
                )
    for patch in state.patches:
        jobs.append(
            (
                f"redistribute@{patch.op_index}:{patch.tensor}",
                patch.tensor,
                patch.from_layout,
                patch.to_layout,
            )
        )
    out: Dict[str, SmemLayout] = {}
    for label, tensor, from_tv, to_tv in jobs:
        decl = graph.tensor(tensor)
        solved = None
        for store, load in _staging_instructions(catalog, decl):
            try:
                solved = synthesize_buffer(
                    label,
                    decl.shape,
                    decl.dtype.bits,
                    [
                        BufferCopy(-1, from_tv, store.vector_elems(decl.dtype), store.name),
                        BufferCopy(-2, to_tv, load.vector_elems(decl.dtype), load.name),
                    ],
                )
                out[label] = solved
                break
            except _PRUNE_ERRORS:
                continue
        if solved is None:
            raise Unsatisfiable(
                f"no staging layout for redistribution of {tensor}"
            )
    return out


def expand_search(
    graph: ProgramGraph, catalog: Catalog, config: SynthesisConfig
) -> List[Candidate]:
    """Depth-first search over per-copy instruction choices.

    Leaves that fail layout solving or shared-memory unification are
    pruned.  The all-narrowest (scalar fallback) leaf is always evaluated
    and included when valid, even past the candidate cap.
    """
    if not graph.ops:
        return []
    points = _copy_choice_points(graph, catalog)
    collected: List[Candidate] = []
    seen: set = set()
    # The fallback leaf is appended separately, so the walk keeps one slot
    # free unless the cap is 1.
    walk_cap = max(1, config.max_candidates - 1)

    def leaf(choice_list: Tuple[int, ...]) -> Optional[Candidate]:
        picked = {
            op.index: options[i]
            for (op, options), i in zip(points, choice_list)
        }
        try:
            choices, layouts, patches, smem, staging = evaluate_assignment(
                graph, catalog, config, picked
            )
        except _PRUNE_ERRORS:
            return None
        return Candidate(len(collected), choices, layouts, patches, smem, staging)

    def dfs(depth: int, prefix: List[int]) -> None:
        if len(collected) >= walk_cap:
            return
        if depth == len(points):
            cand = leaf(tuple(prefix))
            if cand is not None:
                collected.append(cand)
                seen.add(tuple(prefix))
            return
        for i in range(len(points[depth][1])):
            prefix.append(i)
            dfs(depth + 1, prefix)
            prefix.pop()
            if len(collected) >= walk_cap:
                return

    dfs(0, [])

    fallback_key = tuple(len(options) - 1 for _, options in points)
    if config.max_candidates > 1 and fallback_key not in seen:
        cand = leaf(fallback_key)
        if cand is not None:
            cand.index = len(collected)
            collected.append(cand)
    return collected
