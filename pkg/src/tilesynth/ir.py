"""Tile-level program representation: text format, validator, partitioner.

Programs are line-oriented: one statement per line, ``#`` comments.

    t = global_view <buffer-name> <dtype> <layout>
    t = register_tensor <dtype> <shape>
    t = shared_tensor <dtype> <shape>
    copy <src> <dst>
    gemm <c> <a> <b>
    t2 = cast <t1> <dtype>
    t2 = rearrange <t1> [<tv-layout>]
    t_out = elementwise <fn-name> <t1> ... <tn>
    t2 = reduce <t1> <dim>
    loop <trip-count> ... endloop
    annotate <op-index> thread_arrangement <layout>

Shapes and layouts use the layout text syntax.  Operation indices (for
``annotate`` and diagnostics) count action statements only, in program
order; declarations live in the tensor table.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from . import inttuple as it
from .errors import ArityError, ParseError, UnknownTensor
from .layout import Layout, parse_layout

# ---------------------------------------------------------------- dtypes

_FLOAT_FORMATS = {"float8_e5m2": "e5m2", "float8_e4m3": "e4m3"}


@dataclass(frozen=True)
class DType:
    kind: str  # "float" | "int" | "uint"
    bits: int
    float_format: Optional[str] = None

    @property
    def name(self) -> str:
        if self.float_format:
            return f"float8_{self.float_format}"
        prefix = {"float": "float", "int": "int", "uint": "uint"}[self.kind]
        return f"{prefix}{self.bits}"

    def __str__(self) -> str:
        return self.name


_DTYPES: Dict[str, DType] = {}
for _bits in (16, 32, 64):
    _DTYPES[f"float{_bits}"] = DType("float", _bits)
_DTYPES["bfloat16"] = DType("float", 16, None)
for _bits in (1, 2, 4, 8, 16, 32, 64):
    _DTYPES[f"int{_bits}"] = DType("int", _bits)
    _DTYPES[f"uint{_bits}"] = DType("uint", _bits)
for _name, _fmt in _FLOAT_FORMATS.items():
    _DTYPES[_name] = DType("float", 8, _fmt)


def parse_dtype(name: str) -> DType:
    try:
        return _DTYPES[name]
    except KeyError:
        raise ParseError(f"unknown dtype {name!r}") from None


# ---------------------------------------------------------------- tensors


SCOPES = ("Global", "Shared", "Register")


@dataclass
class TensorDecl:
    name: str
    scope: str
    dtype: DType
    shape: Tuple[int, ...]
    layout: Optional[Layout] = None  # Global tensors only
    buffer: Optional[str] = None  # backing buffer name for Global tensors

    @property
    def elems(self) -> int:
        n = 1
        for s in self.shape:
            n *= s
        return n

    @property
    def bytes(self) -> float:
        return self.elems * self.dtype.bits / 8


# ---------------------------------------------------------------- ops

ACTION_KINDS = ("copy", "gemm", "cast", "rearrange", "elementwise", "reduce")


@dataclass
class OpNode:
    kind: str
    operands: List[str]  # tensor names read
    results: List[str]  # tensor names written
    index: int = -1
    line: int = 0
    trip_count: int = 1  # product of enclosing loop trip counts
    cast_dtype: Optional[DType] = None
    reduce_dim: Optional[int] = None
    rearrange_target: Optional[Layout] = None
    elementwise_fn: Optional[str] = None
    thread_arrangement: Optional[Layout] = None

    @property
    def tensors(self) -> List[str]:
        return self.operands + [r for r in self.results if r not in self.operands]


@dataclass
class ProgramGraph:
    tensors: Dict[str, TensorDecl]
    ops: List[OpNode]
    diagnostics: List[str] = field(default_factory=list)

    def tensor(self, name: str) -> TensorDecl:
        try:
            return self.tensors[name]
        except KeyError:
            raise UnknownTensor(f"unknown tensor {name!r}") from None

    def producers(self, name: str) -> List[OpNode]:
        return [op for op in self.ops if name in op.results]

    def consumers(self, name: str) -> List[OpNode]:
        return [op for op in self.ops if name in op.operands]


# ---------------------------------------------------------------- parsing


def _shape_of_layout(layout: Layout) -> Tuple[int, ...]:
    return tuple(it.size(s) for s in layout.shape)


def _parse_shape(text: str, line: int) -> Tuple[int, ...]:
    try:
        tup = it.parse_tuple(text)
    except ParseError as e:
        raise ParseError(str(e), line) from None
    flat = it.flatten(tup)
    if isinstance(tup, int):
        flat = (tup,)
    if any(s < 1 for s in flat):
        raise ParseError(f"shape extents must be >= 1: {text}", line)
    if isinstance(tup, int):
        return (tup,)
    return tuple(it.size(s) for s in tup)


def parse_program(text: str) -> ProgramGraph:
    """Parse program text into a graph with resolved declarations."""
    tensors: Dict[str, TensorDecl] = {}
    ops: List[OpNode] = []
    loop_stack: List[int] = []
    annotations: List[Tuple[int, int, Layout]] = []  # (line, op_index, layout)

    def trip() -> int:
        t = 1
        for x in loop_stack:
            t *= x
        return t

    def declare(decl: TensorDecl, line: int) -> None:
        if decl.name in tensors:
            raise ParseError(f"tensor {decl.name!r} redeclared", line)
        tensors[decl.name] = decl

    def ref(name: str, line: int) -> str:
        if name not in tensors:
            raise ParseError(f"unknown tensor {name!r}", line)
        return name

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        lhs = None
        rest = line
        if "=" in line:
            lhs, rest = (part.strip() for part in line.split("=", 1))
        words = rest.split()
        if not words:
            raise ParseError("empty statement", lineno)
        head, args = words[0], words[1:]

        if head == "global_view":
            if lhs is None or len(args) != 3:
                raise ParseError("usage: t = global_view <buffer> <dtype> <layout>", lineno)
            layout = _parse_layout_arg(args[2], lineno)
            declare(
                TensorDecl(
                    lhs, "Global", parse_dtype(args[1]),
                    _shape_of_layout(layout), layout, buffer=args[0],
                ),
                lineno,
            )
        elif head in ("register_tensor", "shared_tensor"):
            if lhs is None or len(args) != 2:
                raise ParseError(f"usage: t = {head} <dtype> <shape>", lineno)
            scope = "Register" if head == "register_tensor" else "Shared"
            declare(
                TensorDecl(lhs, scope, parse_dtype(args[0]), _parse_shape(args[1], lineno)),
                lineno,
            )
        elif head == "copy":
            if lhs is not None or len(args) != 2:
                raise ParseError("usage: copy <src> <dst>", lineno)
            ops.append(
                OpNode("copy", [ref(args[0], lineno)], [ref(args[1], lineno)],
                       line=lineno, trip_count=trip())
            )
        elif head == "gemm":
            if lhs is not None or len(args) != 3:
                raise ParseError("usage: gemm <c> <a> <b>", lineno)
            c, a, b = (ref(x, lineno) for x in args)
            ops.append(
                OpNode("gemm", [a, b, c], [c], line=lineno, trip_count=trip())
            )
        elif head == "cast":
            if lhs is None or len(args) != 2:
                raise ParseError("usage: t2 = cast <t1> <dtype>", lineno)
            src = tensors[ref(args[0], lineno)]
            dtype = parse_dtype(args[1])
            declare(TensorDecl(lhs, src.scope, dtype, src.shape), lineno)
            ops.append(
                OpNode("cast", [src.name], [lhs], line=lineno,
                       trip_count=trip(), cast_dtype=dtype)
            )
        elif head == "rearrange":
            if lhs is None or len(args) not in (1, 2):
                raise ParseError("usage: t2 = rearrange <t1> [<tv-layout>]", lineno)
            src = tensors[ref(args[0], lineno)]
            target = _parse_layout_arg(args[1], lineno) if len(args) == 2 else None
            declare(TensorDecl(lhs, src.scope, src.dtype, src.shape), lineno)
            ops.append(
                OpNode("rearrange", [src.name], [lhs], line=lineno,
                       trip_count=trip(), rearrange_target=target)
            )
        elif head == "elementwise":
            if lhs is None or len(args) < 2:
                raise ParseError("usage: t = elementwise <fn> <t1> ... <tn>", lineno)
            fn, ins = args[0], [ref(a, lineno) for a in args[1:]]
            first = tensors[ins[0]]
            declare(TensorDecl(lhs, first.scope, first.dtype, first.shape), lineno)
            ops.append(
                OpNode("elementwise", ins, [lhs], line=lineno,
                       trip_count=trip(), elementwise_fn=fn)
            )
        elif head == "reduce":
            if lhs is None or len(args) != 2:
                raise ParseError("usage: t2 = reduce <t1> <dim>", lineno)
            src = tensors[ref(args[0], lineno)]
            try:
                dim = int(args[1])
            except ValueError:
                raise ParseError(f"reduce dim must be an integer: {args[1]}", lineno)
            shape = tuple(1 if i == dim and 0 <= dim < len(src.shape) else s
                          for i, s in enumerate(src.shape))
            declare(TensorDecl(lhs, src.scope, src.dtype, shape), lineno)
            ops.append(
                OpNode("reduce", [src.name], [lhs], line=lineno,
                       trip_count=trip(), reduce_dim=dim)
            )
        elif head == "loop":
            if lhs is not None or len(args) != 1:
                raise ParseError("usage: loop <trip-count>", lineno)
            try:
                count = int(args[0])
            except ValueError:
                raise ParseError(f"loop trip count must be an integer: {args[0]}", lineno)
            if count < 1:
                raise ParseError("loop trip count must be >= 1", lineno)
            loop_stack.append(count)
        elif head == "endloop":
            if lhs is not None or args:
                raise ParseError("usage: endloop", lineno)
            if not loop_stack:
                raise ParseError("endloop without matching loop", lineno)
            loop_stack.pop()
        elif head == "annotate":
            if lhs is not None or len(args) != 3 or args[1] != "thread_arrangement":
                raise ParseError(
                    "usage: annotate <op-index> thread_arrangement <layout>", lineno
                )
            try:
                idx = int(args[0])
            except ValueError:
                raise ParseError(f"op index must be an integer: {args[0]}", lineno)
            annotations.append((lineno, idx, _parse_layout_arg(args[2], lineno)))
        else:
            raise ParseError(f"unknown statement {head!r}", lineno)

    if loop_stack:
        raise ParseError("unterminated loop", len(text.splitlines()))

    for i, op in enumerate(ops):
        op.index = i
    for lineno, idx, layout in annotations:
        if not 0 <= idx < len(ops):
            raise ParseError(f"annotate index {idx} out of range", lineno)
        ops[idx].thread_arrangement = layout
    return ProgramGraph(tensors, ops)


def _parse_layout_arg(text: str, line: int) -> Layout:
    try:
        return parse_layout(text)
    except ParseError as e:
        raise ParseError(str(e), line) from None


def print_program(graph: ProgramGraph) -> str:
    """Canonical text form; parse(print(g)) reproduces g up to loop markers."""
    lines: List[str] = []
    declared_by_op = {
        r
        for op in graph.ops
        if op.kind in ("cast", "rearrange", "elementwise", "reduce")
        for r in op.results
    }
    for t in graph.tensors.values():
        if t.scope == "Global":
            lines.append(f"{t.name} = global_view {t.buffer} {t.dtype} {t.layout}")
        elif t.scope == "Shared":
            lines.append(f"{t.name} = shared_tensor {t.dtype} {it.format_tuple(t.shape)}")
        elif t.scope == "Register" and t.name not in declared_by_op:
            lines.append(f"{t.name} = register_tensor {t.dtype} {it.format_tuple(t.shape)}")
    for op in graph.ops:
        if op.kind == "copy":
            stmt = f"copy {op.operands[0]} {op.results[0]}"
        elif op.kind == "gemm":
            a, b, c = op.operands
            stmt = f"gemm {c} {a} {b}"
        elif op.kind == "cast":
            stmt = f"{op.results[0]} = cast {op.operands[0]} {op.cast_dtype}"
        elif op.kind == "rearrange":
            tail = f" {op.rearrange_target}" if op.rearrange_target else ""
            stmt = f"{op.results[0]} = rearrange {op.operands[0]}{tail}"
        elif op.kind == "elementwise":
            stmt = f"{op.results[0]} = elementwise {op.elementwise_fn} " + " ".join(op.operands)
        elif op.kind == "reduce":
            stmt = f"{op.results[0]} = reduce {op.operands[0]} {op.reduce_dim}"
        else:
            continue
        if op.trip_count > 1:
            stmt = f"loop {op.trip_count}\n{stmt}\nendloop"
        lines.append(stmt)
    for op in graph.ops:
        if op.thread_arrangement is not None:
            lines.append(f"annotate {op.index} thread_arrangement {op.thread_arrangement}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- copy roles


def copy_src_dst(graph: ProgramGraph, op: OpNode) -> Tuple[TensorDecl, TensorDecl]:
    if op.kind != "copy":
        raise ArityError(f"op {op.index} is not a copy")
    return graph.tensor(op.operands[0]), graph.tensor(op.results[0])


# ---------------------------------------------------------------- validate


def validate(graph: ProgramGraph) -> List[str]:
    """Type/scope/shape rules.  Returns diagnostics (empty means valid)."""
    diags: List[str] = []
    defined = set()
    for name, t in graph.tensors.items():
        if t.dtype.bits < 8:
            run = t.shape[0]
            if run * t.dtype.bits < 8:
                diags.append(
                    f"tensor {name}: sub-byte dtype {t.dtype} needs an innermost "
                    f"run of >= {8 // t.dtype.bits} elements, got {run}"
                )
        if t.scope == "Global" and t.layout is None:
            diags.append(f"tensor {name}: Global tensors require a layout")
        if t.scope == "Global" and t.layout is not None:
            strides = [d for s, d in t.layout.flat_modes() if s > 1]
            if any(d == 0 for d in strides):
                diags.append(f"tensor {name}: broadcast (stride-0) global layouts unsupported")
        defined.add(name)

    produced = set()
    for op in graph.ops:
        for r in op.results:
            if op.kind in ("cast", "rearrange", "elementwise", "reduce"):
                if r in produced:
                    diags.append(f"op {op.index}: tensor {r} produced twice")
        if op.kind == "copy":
            src, dst = copy_src_dst(graph, op)
            if src.shape != dst.shape:
                diags.append(
                    f"op {op.index}: copy shape mismatch {src.name}{src.shape} "
                    f"-> {dst.name}{dst.shape}"
                )
            if src.dtype.bits != dst.dtype.bits:
                diags.append(
                    f"op {op.index}: copy dtype width mismatch "
                    f"{src.dtype} -> {dst.dtype}"
                )
        elif op.kind == "gemm":
            a, b, c = (graph.tensor(n) for n in op.operands)
            for t in (a, b, c):
                if t.scope != "Register":
                    diags.append(f"op {op.index}: gemm operand {t.name} must be Register")
                if len(t.shape) != 2:
                    diags.append(f"op {op.index}: gemm operand {t.name} must be rank-2")
            if len(a.shape) == len(b.shape) == len(c.shape) == 2:
                m, ka = a.shape
                n, kb = b.shape
                mc, nc = c.shape
                if ka != kb:
                    diags.append(
                        f"op {op.index}: gemm reduction extent mismatch between "
                        f"{a.name} (K={ka}) and {b.name} (K={kb})"
                    )
                if (m, n) != (mc, nc):
                    diags.append(
                        f"op {op.index}: gemm output extent mismatch "
                        f"{c.name}{c.shape} vs ({m},{n})"
                    )
        elif op.kind == "cast":
            src = graph.tensor(op.operands[0])
            if src.scope != "Register":
                diags.append(f"op {op.index}: cast operand must be Register")
        elif op.kind == "reduce":
            src = graph.tensor(op.operands[0])
            if op.reduce_dim is None or not 0 <= op.reduce_dim < len(src.shape):
                diags.append(
                    f"op {op.index}: reduce dim {op.reduce_dim} out of range for "
                    f"rank-{len(src.shape)} tensor {src.name}"
                )
            if src.scope != "Register":
                diags.append(f"op {op.index}: reduce operand must be Register")
        elif op.kind == "elementwise":
            shapes = {graph.tensor(n).shape for n in op.operands}
            if len(shapes) > 1:
                diags.append(f"op {op.index}: elementwise operand shapes differ: {shapes}")
        elif op.kind == "rearrange":
            src = graph.tensor(op.operands[0])
            if src.scope != "Register":
                diags.append(f"op {op.index}: rearrange operand must be Register")
            if op.rearrange_target is not None and op.rearrange_target.rank != 2:
                diags.append(
                    f"op {op.index}: rearrange target must be a two-mode "
                    "(thread, value) layout"
                )
        for r in op.results:
            produced.add(r)

    # use-before-def for op-produced register tensors
    produced = set()
    for op in graph.ops:
        for name in op.operands:
            t = graph.tensor(name)
            if (
                t.scope == "Register"
                and graph.producers(name)
                and name not in produced
                and name not in op.results  # accumulators read-modify-write
            ):
                diags.append(f"op {op.index}: tensor {name} used before definition")
        produced.update(op.results)
    return diags


# ---------------------------------------------------------------- dead code


def eliminate_dead_code(graph: ProgramGraph) -> ProgramGraph:
    """Drop ops that cannot reach any copy into a Global tensor."""
    live_ops = set()
    live_tensors = set()
    changed = True
    for op in graph.ops:
        if op.kind == "copy" and graph.tensor(op.results[0]).scope == "Global":
            live_ops.add(op.index)
            live_tensors.update(op.tensors)
    while changed:
        changed = False
        for op in graph.ops:
            if op.index in live_ops:
                continue
            if any(r in live_tensors for r in op.results):
                live_ops.add(op.index)
                for name in op.tensors:
                    if name not in live_tensors:
                        live_tensors.add(name)
                changed = True
    kept = [op for op in graph.ops if op.index in live_ops]
    for i, op in enumerate(kept):
        op.index = i
    tensors = {
        name: decl
        for name, decl in graph.tensors.items()
        if name in live_tensors or decl.scope == "Global"
    }
    return ProgramGraph(tensors, kept, list(graph.diagnostics))


# ---------------------------------------------------------------- partition


def partition_components(graph: ProgramGraph) -> List[List[OpNode]]:
    """Split ops into components connected through register tensors.

    Shared-memory tensors are cut points: a shared tensor's writer and
    readers land in different components.  Components are returned in
    first-op order; ops within a component keep program order.
    """
    parent = list(range(len(graph.ops)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    touching: Dict[str, List[int]] = {}
    for op in graph.ops:
        for name in op.tensors:
            if graph.tensor(name).scope == "Register":
                touching.setdefault(name, []).append(op.index)
    for indices in touching.values():
        for other in indices[1:]:
            union(indices[0], other)

    groups: Dict[int, List[OpNode]] = {}
    for op in graph.ops:
        groups.setdefault(find(op.index), []).append(op)
    return [groups[root] for root in sorted(groups)]
