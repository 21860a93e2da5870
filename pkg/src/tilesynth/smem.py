"""Shared-memory layout synthesis.

Per copy, the chosen instruction's per-thread vector width turns the
access distribution ``f`` into a *layout constraint*: a layout over the
buffer's logical coordinates whose strides are partly concrete (the
contiguous vector run) and partly undetermined stride variables.
Constraints from all copies of a buffer are unified, the variables are
materialized into a bijective layout, and a swizzle is scored on top.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .errors import (
    LayoutIncompatible,
    NotInvertible,
    StrideConflict,
    Unsatisfiable,
)
from .layout import Layout, inverse
from .swizzle import (
    IDENTITY_SWIZZLE,
    AccessPattern,
    Swizzle,
    bank_conflicts,
    candidate_swizzles,
    score_swizzles,
)
from .tv import TvLayout

StrideEntry = Union[int, "StrideVar"]


class StrideVar:
    """An undetermined stride; ``divisibility`` constrains its value."""

    _counter = itertools.count(1)

    __slots__ = ("uid", "divisibility")

    def __init__(self, divisibility: int = 1, uid: Optional[int] = None):
        self.uid = next(StrideVar._counter) if uid is None else uid
        self.divisibility = divisibility

    def __repr__(self) -> str:
        return f"D{self.uid}"


@dataclass
class LayoutConstraint:
    """A per-dimension split of the buffer with mixed strides.

    ``splits[i]`` lists (size, stride) pieces of dimension i in
    colexicographic order; sizes multiply to ``dims[i]``.  Strides are
    ints (determined) or StrideVars (undetermined).
    """

    dims: Tuple[int, ...]
    splits: List[List[Tuple[int, StrideEntry]]]

    def size(self) -> int:
        return math.prod(self.dims)

    def concrete_modes(self) -> List[Tuple[int, int]]:
        return [
            (s, d)
            for dim in self.splits
            for s, d in dim
            if isinstance(d, int)
        ]

    def render(self) -> str:
        """Canonical text with variables numbered by first appearance."""
        names: Dict[int, str] = {}

        def stride_text(d: StrideEntry) -> str:
            if isinstance(d, int):
                return str(d)
            if d.uid not in names:
                names[d.uid] = f"D{len(names) + 1}"
            return names[d.uid]

        shapes, strides = [], []
        for dim in self.splits:
            if len(dim) == 1:
                shapes.append(str(dim[0][0]))
                strides.append(stride_text(dim[0][1]))
            else:
                shapes.append("(" + ",".join(str(s) for s, _ in dim) + ")")
                strides.append("(" + ",".join(stride_text(d) for _, d in dim) + ")")
        return f"({','.join(shapes)}):({','.join(strides)})"

    def structure_key(self) -> Tuple:
        """Shape plus concrete strides; variables anonymized."""
        return tuple(
            tuple((s, d if isinstance(d, int) else "var") for s, d in dim)
            for dim in self.splits
        )

    def __str__(self) -> str:
        return self.render()


def parse_constraint(text: str) -> LayoutConstraint:
    """Parse "((8,8),64):((1,D1),D2)" constraint text (test/CLI helper)."""
    cleaned = "".join(text.split())
    shape_text, stride_text = cleaned.split(":")
    shape = _parse_items(shape_text)
    stride = _parse_items(stride_text)
    if len(shape) != len(stride):
        raise LayoutIncompatible("constraint shape/stride arity mismatch")
    vars_seen: Dict[str, StrideVar] = {}

    def entry(tok: str) -> StrideEntry:
        if tok.isdigit():
            return int(tok)
        return vars_seen.setdefault(tok, StrideVar())

    splits: List[List[Tuple[int, StrideEntry]]] = []
    dims: List[int] = []
    for sh, st in zip(shape, stride):
        if isinstance(sh, list) != isinstance(st, list):
            raise LayoutIncompatible("constraint dim structure mismatch")
        if isinstance(sh, list):
            splits.append([(int(s), entry(d)) for s, d in zip(sh, st)])
        else:
            splits.append([(int(sh), entry(st))])
        dims.append(math.prod(s for s, _ in splits[-1]))
    return LayoutConstraint(tuple(dims), splits)


def _parse_items(text: str):
    if not (text.startswith("(") and text.endswith(")")):
        raise LayoutIncompatible(f"bad constraint text {text!r}")
    items, depth, start = [], 0, 1
    for i, ch in enumerate(text[1:-1], start=1):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            items.append(text[start:i])
            start = i + 1
    items.append(text[start : len(text) - 1])
    out = []
    for item in items:
        if item.startswith("("):
            out.append(item[1:-1].split(","))
        else:
            out.append(item)
    return out


# ---------------------------------------------------------------- build


def build_constraint(
    f: TvLayout, vector_elems: int, dims: Tuple[int, ...]
) -> LayoutConstraint:
    """Constraint on a buffer layout from one copy's access distribution.

    Threads must see their ``vector_elems`` contiguous, vector-aligned
    elements; everything else stays undetermined.  Fails with
    LayoutIncompatible when f is not a bijection onto the buffer (the
    instruction cannot implement this copy).
    """
    total = math.prod(dims)
    from .tv import filter_replication

    f = filter_replication(f)
    if f.threads * f.values != total:
        raise LayoutIncompatible(
            f"access layout covers {f.threads * f.values} of {total} elements"
        )
    try:
        finv = inverse(f.layout)
    except NotInvertible as e:
        raise LayoutIncompatible(str(e)) from e
    threads = f.threads
    vec_boundary_lo = threads
    vec_boundary_hi = threads * vector_elems

    # finv's modes sit in logical colex order; each leaf covers a logical
    # span and a thread-value index field.  Split leaves so neither span
    # straddles a dimension boundary or the vector field boundaries.
    dim_bounds = []
    acc = 1
    for d in dims:
        acc *= d
        dim_bounds.append(acc)

    leaves: List[Tuple[int, int, int]] = []  # (size, tv_weight, logical_weight)
    logical = 1
    for s, w in finv.flat_modes():
        leaves.append((s, w, logical))
        logical *= s

    def split_points(size: int, weight: int, bounds: Sequence[int]) -> List[int]:
        pts = []
        for b in bounds:
            if weight < b < weight * size:
                if b % weight != 0:
                    raise LayoutIncompatible(
                        f"boundary {b} misaligned with mode weight {weight}"
                    )
                pts.append(b // weight)
        return pts

    final: List[Tuple[int, int, int]] = []
    for s, w, lw in leaves:
        points = sorted(
            set(
                split_points(s, w, (vec_boundary_lo, vec_boundary_hi))
                + split_points(s, lw, dim_bounds)
            )
        )
        prev = 1
        for p in points + [s]:
            if p % prev != 0 or s % p != 0:
                raise LayoutIncompatible(
                    f"cannot split mode of size {s} at local point {p}"
                )
            piece = p // prev
            if piece > 1 or (prev == 1 and p == s):
                final.append((piece, w * prev, lw * prev))
            prev = p

    # Classify each piece and group by dimension.
    splits: List[List[Tuple[int, StrideEntry]]] = [[] for _ in dims]
    for s, w, lw in final:
        dim_index = 0
        bound = 1
        for i, d in enumerate(dims):
            if lw < bound * d:
                dim_index = i
                break
            bound *= d
        if vec_boundary_lo <= w < vec_boundary_hi:
            entry: StrideEntry = w // threads
        else:
            entry = StrideVar(vector_elems)
        splits[dim_index].append((s, entry))

    # Merge adjacent undetermined pieces within a dimension.
    for i, dim in enumerate(splits):
        merged: List[Tuple[int, StrideEntry]] = []
        for s, d in dim:
            if (
                merged
                and isinstance(d, StrideVar)
                and isinstance(merged[-1][1], StrideVar)
            ):
                prev_s, prev_d = merged[-1]
                merged[-1] = (
                    prev_s * s,
                    StrideVar(max(prev_d.divisibility, d.divisibility)),
                )
            else:
                merged.append((s, d))
        if not merged:
            merged = [(1, StrideVar(1))]
        splits[i] = merged
    return LayoutConstraint(tuple(dims), splits)


# ---------------------------------------------------------------- unify


def _split_entry(
    piece: Tuple[int, StrideEntry], k: int
) -> Tuple[Tuple[int, StrideEntry], Tuple[int, StrideEntry]]:
    s, d = piece
    if isinstance(d, int):
        return (k, d), (s // k, d * k)
    return (k, StrideVar(d.divisibility)), (s // k, StrideVar(d.divisibility))


def unify(c1: LayoutConstraint, c2: LayoutConstraint) -> LayoutConstraint:
    """Least-committed constraint containing all determined modes of both.

    Dimension split structures merge piecewise; an undetermined piece
    splits freely, a determined piece splits linearly.  Determined pieces
    that disagree, or whose address fields collide across dimensions,
    raise StrideConflict.
    """
    if c1.dims != c2.dims:
        raise StrideConflict(f"buffer extents differ: {c1.dims} vs {c2.dims}")
    out_splits: List[List[Tuple[int, StrideEntry]]] = []
    for dim_index in range(len(c1.dims)):
        xs = list(c1.splits[dim_index])
        ys = list(c2.splits[dim_index])
        merged: List[Tuple[int, StrideEntry]] = []
        i = j = 0
        while i < len(xs) and j < len(ys):
            (sx, dx), (sy, dy) = xs[i], ys[j]
            k = min(sx, sy)
            if sx % k or sy % k:
                raise StrideConflict(
                    f"dimension split sizes misalign: {sx} vs {sy}"
                )
            if sx > k:
                head, tail = _split_entry(xs[i], k)
                xs[i] = tail
                px = head
            else:
                px = xs[i]
                i += 1
            if sy > k:
                head, tail = _split_entry(ys[j], k)
                ys[j] = tail
                py = head
            else:
                py = ys[j]
                j += 1
            dxe, dye = px[1], py[1]
            if isinstance(dxe, int) and isinstance(dye, int):
                if dxe != dye:
                    raise StrideConflict(
                        f"determined strides disagree: {dxe} vs {dye}"
                    )
                merged.append((k, dxe))
            elif isinstance(dxe, int):
                merged.append((k, dxe))
            elif isinstance(dye, int):
                merged.append((k, dye))
            else:
                merged.append(
                    (k, StrideVar(max(dxe.divisibility, dye.divisibility)))
                )
        if i < len(xs) or j < len(ys):
            raise StrideConflict("dimension split sizes do not cover the dim")
        out_splits.append(merged)
    result = LayoutConstraint(c1.dims, out_splits)
    _check_concrete_chain(result)
    return result


def _check_concrete_chain(c: LayoutConstraint) -> None:
    """Determined modes must pack into a bijection's stride chain."""
    modes = sorted(c.concrete_modes(), key=lambda m: m[1])
    covered = 1
    for s, d in modes:
        if d < covered or d % covered != 0:
            raise StrideConflict(
                f"determined modes overlap: ({s}:{d}) clashes below span {covered}"
            )
        covered = d * s


# ---------------------------------------------------------------- materialize


def materialize(c: LayoutConstraint) -> Layout:
    """Assign stride variables so the layout is a bijection onto [0, size).

    Determined modes are placed first (ascending stride); undetermined
    modes fill chain gaps and then extend the chain in logical order
    (innermost dimension first).  Divisibility requirements are checked
    at assignment.
    """
    _check_concrete_chain(c)
    # (dim, position) -> assigned stride
    assignment: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
    variables: List[Tuple[int, int, int, StrideVar]] = []  # (dim, pos, size, var)
    for dim_index, dim in enumerate(c.splits):
        for pos, (s, d) in enumerate(dim):
            if isinstance(d, int):
                assignment[(dim_index, pos)] = [(s, d)]
            else:
                variables.append((dim_index, pos, s, d))

    concrete = sorted(c.concrete_modes(), key=lambda m: m[1])
    pool = list(variables)  # logical order already (dim asc, pos asc)

    def place_from_pool(gap: int, at: int) -> List[Tuple[int, int, int, StrideVar, int]]:
        """Pick pool pieces whose sizes multiply to exactly gap."""
        placed = []
        cur = at
        while gap > 1:
            found = None
            for entry in pool:
                _, _, size, var = entry
                g = math.gcd(size, gap)
                if g > 1 and cur % var.divisibility == 0:
                    found = (entry, g)
                    break
            if found is None:
                raise Unsatisfiable(
                    f"cannot fill stride-chain gap of {gap} at {cur}"
                )
            entry, g = found
            dim_index, pos, size, var = entry
            pool.remove(entry)
            if size > g:
                # Split the variable: the remainder stays in the pool with
                # the same ordering position.
                pool.insert(0, (dim_index, pos, size // g, var))
                pool.sort(key=lambda e: (e[0], e[1]))
            placed.append((dim_index, pos, g, var, cur))
            cur *= g
            gap //= g
        return placed

    placements: Dict[Tuple[int, int], List[Tuple[int, int]]] = {
        key: list(val) for key, val in assignment.items()
    }
    covered = 1
    for s, d in concrete:
        if d > covered:
            for dim_index, pos, size, var, stride in place_from_pool(d // covered, covered):
                placements.setdefault((dim_index, pos), []).append((size, stride))
        covered = d * s
    for dim_index, pos, size, var in list(pool):
        if covered % var.divisibility != 0:
            raise Unsatisfiable(
                f"stride {covered} violates divisibility {var.divisibility} "
                f"of variable {var!r}"
            )
        placements.setdefault((dim_index, pos), []).append((size, covered))
        covered *= size
    if covered != c.size():
        raise Unsatisfiable(
            f"materialized span {covered} != buffer size {c.size()}"
        )

    # Reassemble per-dim modes; split variables contribute multiple pieces
    # ordered by stride (fastest-varying digit first within the piece).
    dim_shapes: List = []
    dim_strides: List = []
    for dim_index, dim in enumerate(c.splits):
        shapes: List[int] = []
        strides: List[int] = []
        for pos in range(len(dim)):
            pieces = sorted(placements[(dim_index, pos)], key=lambda p: p[1])
            for s, d in pieces:
                shapes.append(s)
                strides.append(d)
        merged = _merge_adjacent(shapes, strides)
        if len(merged) == 1:
            dim_shapes.append(merged[0][0])
            dim_strides.append(merged[0][1])
        else:
            dim_shapes.append(tuple(s for s, _ in merged))
            dim_strides.append(tuple(d for _, d in merged))
    return Layout(tuple(dim_shapes), tuple(dim_strides))


def _merge_adjacent(shapes: List[int], strides: List[int]) -> List[Tuple[int, int]]:
    out: List[Tuple[int, int]] = []
    for s, d in zip(shapes, strides):
        if s == 1:
            continue
        if out and d == out[-1][0] * out[-1][1]:
            out[-1] = (out[-1][0] * s, out[-1][1])
        else:
            out.append((s, d))
    if not out:
        out = [(1, 0)]
    return out


# ---------------------------------------------------------------- TMA check


@dataclass
class TmaCheck:
    feasible: bool
    reason: str = ""
    hint: Optional[Layout] = None


def check_tma(
    c: LayoutConstraint,
    element_bits: int,
    *,
    max_dims: int = 5,
    align_bytes: int = 16,
    max_box: int = 256,
) -> TmaCheck:
    """Feasibility of serving this buffer with a bulk-copy engine.

    The unified constraint must have few enough dimensions, a contiguous
    16-byte-aligned innermost run, and bounded per-dimension extents.
    The hint materializes free strides to maximize the contiguous box.
    """
    n_modes = sum(len(dim) for dim in c.splits)
    if n_modes > max_dims:
        return TmaCheck(False, f"{n_modes} dims exceed limit {max_dims}")
    if any(d > max_box for d in c.dims):
        return TmaCheck(False, f"extent exceeds box cap {max_box}")
    run_elems = 1
    for s, d in sorted(c.concrete_modes(), key=lambda m: m[1]):
        if d == run_elems:
            run_elems *= s
    run_bytes = run_elems * element_bits // 8
    if run_bytes < align_bytes:
        return TmaCheck(
            False,
            f"innermost contiguous run is {run_bytes}B < {align_bytes}B",
        )
    try:
        hint = materialize(c)
    except Unsatisfiable as e:
        return TmaCheck(False, str(e))
    return TmaCheck(True, "", hint)


# ---------------------------------------------------------------- buffers


@dataclass
class BufferCopy:
    """One copy touching a shared buffer, with its resolved access side."""

    op_index: int
    access: TvLayout  # memory-side thread-value layout over the buffer
    vector_elems: int
    instruction: str


@dataclass
class SmemLayout:
    buffer: str
    layout: Layout
    swizzle: Swizzle
    element_bits: int
    copy_conflicts: Dict[int, int] = field(default_factory=dict)
    identity_conflicts: Dict[int, int] = field(default_factory=dict)
    constraint: Optional[LayoutConstraint] = None
    copies: List["BufferCopy"] = field(default_factory=list)

    def byte_address(self, logical: int) -> int:
        return self.swizzle(self.layout(logical) * self.element_bits // 8)

    def render(self) -> str:
        return f"{self.layout} (+) {self.swizzle}"


def access_patterns(
    m: Layout, element_bits: int, copy: BufferCopy
) -> List[AccessPattern]:
    """One warp-wide pattern per (warp, vector iteration) of the copy.

    Patterns carry pre-swizzle byte addresses; the conflict simulator
    applies the swizzle under evaluation.
    """
    f = copy.access
    width = copy.vector_elems * element_bits // 8
    if width < 1:
        width = 1
    warp = 32
    n_warps = max(1, f.threads // warp)
    iters = max(1, f.values // copy.vector_elems)
    patterns = []
    for w in range(n_warps):
        for j in range(iters):
            addrs = []
            for lane in range(min(warp, f.threads)):
                t = w * warp + lane
                elem = f.position(t, j * copy.vector_elems)
                addrs.append(m(elem) * element_bits // 8)
            patterns.append(AccessPattern(tuple(addrs), width))
    # Deduplicate: repeated identical phases score identically.
    unique = []
    seen = set()
    for p in patterns:
        key = (p.addresses, p.width)
        if key not in seen:
            seen.add(key)
            unique.append(p)
    return unique


_BUFFER_CACHE: Dict[Tuple, "SmemLayout"] = {}


def synthesize_buffer(
    buffer: str,
    dims: Tuple[int, ...],
    element_bits: int,
    copies: Sequence[BufferCopy],
) -> SmemLayout:
    """Unify per-copy constraints, materialize, and pick a swizzle.

    Results are cached: the same buffer extents, dtype width, and access
    set always synthesize the same layout and swizzle.
    """
    if not copies:
        raise Unsatisfiable(f"buffer {buffer} has no copies")
    cache_key = (
        dims,
        element_bits,
        tuple(
            (c.op_index, str(c.access.layout), c.access.tile, c.vector_elems)
            for c in copies
        ),
    )
    cached = _BUFFER_CACHE.get(cache_key)
    if cached is not None:
        return SmemLayout(
            buffer,
            cached.layout,
            cached.swizzle,
            cached.element_bits,
            dict(cached.copy_conflicts),
            dict(cached.identity_conflicts),
            cached.constraint,
            list(cached.copies),
        )
    constraint = None
    for copy in copies:
        c = build_constraint(copy.access, copy.vector_elems, dims)
        constraint = c if constraint is None else unify(constraint, c)
    m = materialize(constraint)

    max_width = max(
        max(1, copy.vector_elems * element_bits // 8) for copy in copies
    )
    min_base = max(2, (max_width - 1).bit_length())
    pool = candidate_swizzles(min_base=min_base)

    # Patterns are swizzle-independent; compute them once per copy.
    per_copy_patterns = [access_patterns(m, element_bits, c) for c in copies]

    def gen_for(patterns: List[AccessPattern]):
        def gen(sw: Swizzle):
            return patterns

        return gen

    best, _ = score_swizzles([gen_for(p) for p in per_copy_patterns], pool)
    result = SmemLayout(
        buffer, m, best, element_bits, constraint=constraint, copies=list(copies)
    )
    for copy, pats in zip(copies, per_copy_patterns):
        result.copy_conflicts[copy.op_index] = max(
            bank_conflicts(p, best) for p in pats
        )
        result.identity_conflicts[copy.op_index] = max(
            bank_conflicts(p, IDENTITY_SWIZZLE) for p in pats
        )
    _BUFFER_CACHE[cache_key] = result
    return result
