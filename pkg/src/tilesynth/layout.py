"""Hierarchical integer layouts and their algebra.

A :class:`Layout` is a pair of congruent nested integer tuples
``shape : stride`` and denotes the function

    x  |->  sum over leaves of (digit(x) * stride_leaf)

where a linear index decomposes colexicographically over the shape
(first leaf fastest).  Parenthesized sub-tuples group leaves into
*modes*.  All operations here are pure; layouts are immutable.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple, Union

from . import inttuple as it
from .errors import (
    LayoutIncompatible,
    NotComplementable,
    NotDivisible,
    NotInvertible,
    OutOfDomain,
    ParseError,
    ShapeMismatch,
)
from .inttuple import IntTuple

Coord = Union[int, Tuple["Coord", ...]]


class Layout:
    """An immutable (shape : stride) function from indices to indices.

    The top-level shape is always a tuple; each element is one mode.
    """

    __slots__ = ("shape", "stride")

    def __init__(self, shape: IntTuple, stride: IntTuple):
        if isinstance(shape, int):
            shape = (shape,)
        if isinstance(stride, int):
            stride = (stride,)
        it.validate(shape, min_leaf=1)
        it.validate(stride, min_leaf=0)
        if not it.congruent(shape, stride):
            raise ShapeMismatch(
                f"shape {it.format_tuple(shape)} and stride "
                f"{it.format_tuple(stride)} are not congruent"
            )
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "stride", stride)

    def __setattr__(self, name, value):
        raise AttributeError("Layout is immutable")

    # ------------------------------------------------------------ basics

    @property
    def rank(self) -> int:
        """Number of top-level modes."""
        return len(self.shape)

    def size(self) -> int:
        return it.size(self.shape)

    def cosize(self) -> int:
        """1 + maximum output over the domain (strides are nonnegative)."""
        out = 1
        for s, d in it.zip_leaves(self.shape, self.stride):
            out += (s - 1) * d
        return out

    def mode(self, i: int) -> "Layout":
        """The i-th top-level mode as a standalone layout."""
        return Layout(self.shape[i], self.stride[i])

    def modes(self) -> List["Layout"]:
        return [self.mode(i) for i in range(self.rank)]

    def flat_modes(self) -> List[Tuple[int, int]]:
        """(shape, stride) leaf pairs in colex order."""
        return list(it.zip_leaves(self.shape, self.stride))

    # ------------------------------------------------------------ evaluate

    def __call__(self, x: Coord) -> int:
        return _evaluate(self.shape, self.stride, x)

    def map(self) -> List[int]:
        """The full image [L(0), ..., L(size-1)]."""
        return [self(i) for i in range(self.size())]

    # ------------------------------------------------------------ equality

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Layout)
            and self.shape == other.shape
            and self.stride == other.stride
        )

    def __hash__(self) -> int:
        return hash((self.shape, self.stride))

    def equivalent(self, other: "Layout") -> bool:
        """Equality of coalesced forms (same function, maybe regrouped)."""
        a, b = coalesce(self), coalesce(other)
        return a.shape == b.shape and a.stride == b.stride

    # ------------------------------------------------------------ text

    def __str__(self) -> str:
        return f"{it.format_tuple(self.shape)}:{it.format_tuple(self.stride)}"

    def __repr__(self) -> str:
        return f"Layout({self})"


def identity_layout(n: int) -> Layout:
    return Layout((n,), (1,))


def parse_layout(text: str) -> Layout:
    """Parse "((2,4),(2,2)):((8,1),(4,16))" style layout text."""
    cleaned = "".join(text.split())
    if cleaned.count(":") != 1:
        raise ParseError(f"layout needs exactly one ':': {text!r}")
    shape_text, stride_text = cleaned.split(":")
    shape = it.parse_tuple(shape_text)
    stride = it.parse_tuple(stride_text)
    return Layout(shape, stride)


# ---------------------------------------------------------------- evaluate


def _evaluate(shape: IntTuple, stride: IntTuple, x: Coord) -> int:
    if isinstance(shape, int):
        if not isinstance(x, int):
            raise ShapeMismatch(f"tuple coordinate for scalar shape {shape}")
        if not 0 <= x < shape:
            raise OutOfDomain(f"coordinate {x} outside [0, {shape})")
        return x * stride
    if isinstance(x, int):
        # Linear index: decompose colexicographically across this subtree.
        total_size = it.size(shape)
        if not 0 <= x < total_size:
            raise OutOfDomain(f"index {x} outside [0, {total_size})")
        total = 0
        for s, d in zip(shape, stride):
            sub = it.size(s)
            total += _evaluate(s, d, x % sub)
            x //= sub
        return total
    if len(x) != len(shape):
        raise ShapeMismatch(
            f"coordinate arity {len(x)} != mode count {len(shape)}"
        )
    return sum(_evaluate(s, d, c) for s, d, c in zip(shape, stride, x))


# ---------------------------------------------------------------- coalesce


def _coalesce_modes(modes: Sequence[Tuple[int, int]]) -> List[Tuple[int, int]]:
    out: List[Tuple[int, int]] = []
    for s, d in modes:
        if s == 1:
            continue
        if out:
            s0, d0 = out[-1]
            if d == s0 * d0:
                out[-1] = (s0 * s, d0)
                continue
        out.append((s, d))
    return out


def coalesce(layout: Layout) -> Layout:
    """Flatten and merge adjacent mergeable leaves; drop size-1 modes.

    The result is pointwise equal to the input on the full domain.
    """
    modes = _coalesce_modes(layout.flat_modes())
    if not modes:
        return Layout((1,), (0,))
    shapes, strides = zip(*modes)
    return Layout(tuple(shapes), tuple(strides))


# ---------------------------------------------------------------- compose


def _shape_div(a: int, b: int) -> int:
    if b != 0 and a % b == 0:
        return a // b
    if a != 0 and b % a == 0:
        return 1
    raise LayoutIncompatible(f"divisibility condition violated: {a} vs {b}")


def _compose_leaf(
    fa: List[Tuple[int, int]], s: int, d: int
) -> List[Tuple[int, int]]:
    """Compose a coalesced flat layout with one right-hand leaf (s : d)."""
    if s == 1:
        return []
    if d == 0:
        return [(s, 0)]
    out: List[Tuple[int, int]] = []
    rest_shape, rest_stride = s, d
    for si, di in fa[:-1]:
        if rest_shape == 1:
            break
        s1 = _shape_div(si, rest_stride)
        keep = min(s1, rest_shape)
        if keep > 1:
            out.append((keep, di * rest_stride))
        rest_shape = _shape_div(rest_shape, s1)
        rest_stride = _shape_div(rest_stride, si)
    if rest_shape > 1:
        _, d_last = fa[-1]
        out.append((rest_shape, d_last * rest_stride))
    return out


def _splice(shape: IntTuple, stride: IntTuple, fa) -> Tuple[tuple, tuple]:
    """Walk B's structure; leaves expand into composed mode runs."""
    shapes: List[IntTuple] = []
    strides: List[IntTuple] = []
    for s, d in zip(shape, stride):
        if isinstance(s, int):
            for cs, cd in _compose_leaf(fa, s, d):
                shapes.append(cs)
                strides.append(cd)
        else:
            sub_s, sub_d = _splice(s, d, fa)
            shapes.append(sub_s)
            strides.append(sub_d)
    if not shapes:
        return (1,), (0,)
    return tuple(shapes), tuple(strides)


def compose(a: Layout, b: Layout) -> Layout:
    """Function composition: result(x) = a(b(x)) with size(result) = size(b).

    The result keeps b's top-level mode structure; each leaf of b expands
    into the modes its image traces through a.
    """
    if b.cosize() > a.size():
        raise OutOfDomain(
            f"image of {b} (cosize {b.cosize()}) escapes domain of {a} "
            f"(size {a.size()})"
        )
    fa = coalesce(a).flat_modes()
    shapes, strides = _splice(b.shape, b.stride, fa)
    return Layout(shapes, strides)


# ---------------------------------------------------------------- complement


def complement(a: Layout, codomain_size: int) -> Layout:
    """A gap-filling layout: concat(a, result) is bijective onto [0, M).

    Requires a to be injective and its image to tile [0, M) evenly.
    """
    modes = [(s, d) for s, d in coalesce(a).flat_modes() if s > 1]
    for s, d in modes:
        if d == 0:
            raise NotComplementable("layout with stride-0 mode is not injective")
    modes.sort(key=lambda m: m[1])
    out: List[Tuple[int, int]] = []
    covered = 1
    for s, d in modes:
        if d < covered or d % covered != 0:
            raise NotComplementable(
                f"mode ({s}:{d}) overlaps already-covered span {covered}"
            )
        if d > covered:
            out.append((d // covered, covered))
        covered = d * s
    if codomain_size % covered != 0:
        raise NotComplementable(
            f"codomain {codomain_size} incompatible with span {covered}"
        )
    if codomain_size > covered:
        out.append((codomain_size // covered, covered))
    merged = _coalesce_modes(out)
    if not merged:
        return Layout((1,), (0,))
    shapes, strides = zip(*merged)
    return Layout(tuple(shapes), tuple(strides))


# ---------------------------------------------------------------- inverse


def inverse(a: Layout) -> Layout:
    """The inverse of a bijection onto [0, size); result is coalesced flat."""
    flat = [(s, d) for s, d in coalesce(a).flat_modes() if s > 1]
    weights = []
    w = 1
    for s, _ in flat:
        weights.append(w)
        w *= s
    if any(d == 0 for s, d in flat):
        raise NotInvertible("stride-0 mode with extent > 1 is not injective")
    order = sorted(range(len(flat)), key=lambda i: flat[i][1])
    covered = 1
    shapes: List[int] = []
    strides: List[int] = []
    for i in order:
        s, d = flat[i]
        if d != covered:
            raise NotInvertible(
                f"sorted strides of {a} do not form exact prefix products"
            )
        shapes.append(s)
        strides.append(weights[i])
        covered *= s
    if not shapes:
        return Layout((1,), (0,))
    merged = _coalesce_modes(list(zip(shapes, strides)))
    if not merged:
        return Layout((1,), (0,))
    ms, md = zip(*merged)
    return Layout(tuple(ms), tuple(md))


# ---------------------------------------------------------------- concat


def concat(a: Layout, b: Layout) -> Layout:
    """Mode juxtaposition: result((x, y)) = a(x) + b(y)."""
    return Layout((a.shape, b.shape), (a.stride, b.stride))


# ---------------------------------------------------------------- restriction


def restrict_mode(a: Layout, mode_index: int, n: int) -> Layout:
    layout, _ = restrict_mode_split(a, mode_index, n)
    return layout


def restrict_mode_split(
    a: Layout, mode_index: int, n: int
) -> Tuple[Layout, List[Tuple[int, int]]]:
    """Restrict one top-level mode to its colex-fastest n positions.

    Returns the restricted layout and the dropped (shape, stride) leaves,
    colex order preserved.  The restricted sub-domain is exactly the
    original indices whose mode digit is < n.
    """
    if not 0 <= mode_index < a.rank:
        raise ShapeMismatch(f"mode index {mode_index} out of range")
    target = a.mode(mode_index)
    leaves = target.flat_modes()
    total = it.size(target.shape)
    if n < 1 or n > total:
        raise NotDivisible(f"cannot restrict mode of size {total} to {n}")
    if n == total:
        return a, []
    kept: List[Tuple[int, int]] = []
    dropped: List[Tuple[int, int]] = []
    acc = 1
    for s, d in leaves:
        if acc == n:
            dropped.append((s, d))
            continue
        if acc * s <= n:
            kept.append((s, d))
            acc *= s
            continue
        # Boundary falls inside this leaf: split it.
        if n % acc != 0:
            raise NotDivisible(f"restriction size {n} misaligned at {acc}")
        need = n // acc
        if s % need != 0:
            raise NotDivisible(
                f"leaf of size {s} not divisible by required factor {need}"
            )
        if need > 1:
            kept.append((need, d))
        dropped.append((s // need, d * need))
        acc = n
    if acc != n:
        raise NotDivisible(
            f"mode of size {total} cannot reach restriction size {n}"
        )
    if not kept:
        kept = [(1, 0)]
    new_mode_shape: IntTuple = (
        kept[0][0] if len(kept) == 1 else tuple(s for s, _ in kept)
    )
    new_mode_stride: IntTuple = (
        kept[0][1] if len(kept) == 1 else tuple(d for _, d in kept)
    )
    shapes = list(a.shape)
    strides = list(a.stride)
    shapes[mode_index] = new_mode_shape
    strides[mode_index] = new_mode_stride
    return Layout(tuple(shapes), tuple(strides)), dropped


def restrict_first_mode(a: Layout, n: int) -> Layout:
    """Restrict the first mode to size n (colex-fastest sub-modes kept)."""
    return restrict_mode(a, 0, n)


def group_modes(a: Layout, sizes: Sequence[int]) -> Layout:
    """Regroup a layout's leaves into modes of the given sizes.

    Leaves are taken in colex order and split at group boundaries; the
    products of the grouped leaves must reach each size exactly.
    """
    leaves = list(a.flat_modes())
    shapes: List[IntTuple] = []
    strides: List[IntTuple] = []
    idx = 0
    for target in sizes:
        got: List[Tuple[int, int]] = []
        acc = 1
        while acc < target:
            if idx >= len(leaves):
                raise NotDivisible(
                    f"layout of size {a.size()} cannot group into {tuple(sizes)}"
                )
            s, d = leaves[idx]
            if acc * s <= target:
                got.append((s, d))
                acc *= s
                idx += 1
            else:
                need = target // acc
                if target % acc != 0 or s % need != 0:
                    raise NotDivisible(
                        f"group boundary {target} misaligned inside a leaf of {s}"
                    )
                got.append((need, d))
                leaves[idx] = (s // need, d * need)
                acc = target
        if not got:
            got = [(1, 0)]
        if len(got) == 1:
            shapes.append(got[0][0])
            strides.append(got[0][1])
        else:
            shapes.append(tuple(s for s, _ in got))
            strides.append(tuple(d for _, d in got))
    while idx < len(leaves) and leaves[idx][0] == 1:
        idx += 1
    if idx != len(leaves):
        raise NotDivisible(
            f"layout of size {a.size()} does not cover groups {tuple(sizes)}"
        )
    return Layout(tuple(shapes), tuple(strides))


# ---------------------------------------------------------------- dim maps


def projection_layout(extents: Tuple[int, int], out_dim: int) -> Layout:
    """Maps a colex linear index over extents to its out_dim coordinate."""
    strides = (1, 0) if out_dim == 0 else (0, 1)
    return Layout(extents, strides)


def embedding_layout(extents: Tuple[int, int], in_dim: int) -> Layout:
    """Maps a 1-D coordinate to the linear index with the other dim at 0."""
    if in_dim == 0:
        return Layout((extents[0],), (1,))
    return Layout((extents[1],), (extents[0],))


def dim_restrict(
    composite: Layout,
    in_dim: int,
    out_dim: int,
    in_extents: Tuple[int, int],
    out_extents: Tuple[int, int],
) -> Layout:
    """Restrict a 2-D tile-to-tensor mapping to a single dimension pair.

    ``composite`` maps a 2-D tile coordinate space (mode sizes equal to
    in_extents) to linear indices decoded colex by out_extents.  The result
    is the flat 1-D map obtained by fixing the other input coordinate to 0
    and projecting the output onto out_dim.
    """
    if len(in_extents) != 2 or len(out_extents) != 2:
        raise ShapeMismatch("dim_restrict expects 2-D extents")
    if composite.rank != 2:
        raise ShapeMismatch("composite must have exactly two modes")
    sizes = tuple(it.size(s) for s in composite.shape)
    if sizes != tuple(in_extents):
        raise ShapeMismatch(
            f"composite mode sizes {sizes} != input extents {in_extents}"
        )
    emb = embedding_layout(tuple(in_extents), in_dim)
    proj = projection_layout(tuple(out_extents), out_dim)
    return coalesce(compose(proj, compose(composite, emb)))
