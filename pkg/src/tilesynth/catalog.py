"""Instruction catalog: data-driven models of collective instructions.

Each copy instruction is modeled by source/destination thread-value
layouts over its tile, an access width, a thread count, and issue and
completion cycles.  Matrix instructions carry one fragment layout per
operand.  Generic load/store entries synthesize their layouts per dtype:
thread t moves ``vector_bits / dtype_bits`` contiguous elements.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .errors import CatalogFormatError, NoInstructionAvailable
from .ir import DType, TensorDecl
from .layout import Layout, parse_layout
from .tv import TvLayout

DATA_DIR = Path(__file__).resolve().parent / "data"


@dataclass(frozen=True)
class Instruction:
    name: str
    category: str  # "copy" | "mma" | "alu"
    issue_cycles: int
    completion_cycles: int
    arch: str = ""
    # copy fields
    src_scope: Optional[str] = None
    dst_scope: Optional[str] = None
    vector_bytes: int = 0
    threads: int = 0
    generic: bool = False
    element_bits: int = 0  # explicit-layout entries fix their element width
    tile: Tuple[int, ...] = ()
    tv_src: Optional[Layout] = None
    tv_dst: Optional[Layout] = None
    tma: bool = False
    # mma fields
    mnk: Tuple[int, int, int] = ()
    dtype_a: Optional[str] = None
    dtype_b: Optional[str] = None
    dtype_c: Optional[str] = None
    tv_a: Optional[Layout] = None
    tv_b: Optional[Layout] = None
    tv_c: Optional[Layout] = None

    # ------------------------------------------------------------ copies

    def vector_elems(self, dtype: DType) -> int:
        if self.element_bits:
            return self.vector_bytes * 8 // self.element_bits
        return self.vector_bytes * 8 // dtype.bits

    def supports_dtype(self, dtype: DType) -> bool:
        if self.category != "copy":
            return False
        bits = self.vector_bytes * 8
        if self.element_bits:
            return dtype.bits == self.element_bits
        return bits >= dtype.bits and bits % dtype.bits == 0

    def copy_layouts(self, dtype: DType) -> Tuple[TvLayout, TvLayout]:
        """(source, destination) thread-value layouts in element units."""
        if self.category != "copy" or self.tma:
            raise NoInstructionAvailable(f"{self.name} has no thread-value layouts")
        if not self.generic:
            return (
                TvLayout(self.tv_src, self.tile),
                TvLayout(self.tv_dst, self.tile),
            )
        v = self.vector_elems(dtype)
        # Nested 1-tuples keep the (thread, value) mode structure intact
        # through composition.
        if v > 1:
            layout = Layout(((self.threads,), (v,)), ((v,), (1,)))
        else:
            layout = Layout(((self.threads,), (1,)), ((1,), (0,)))
        tv = TvLayout(layout, (self.threads * v,))
        return tv, tv

    # ------------------------------------------------------------ mma

    def mma_layouts(self) -> Tuple[TvLayout, TvLayout, TvLayout]:
        m, n, k = self.mnk
        return (
            TvLayout(self.tv_a, (m, k)),
            TvLayout(self.tv_b, (n, k)),
            TvLayout(self.tv_c, (m, n)),
        )

    def macs(self) -> int:
        m, n, k = self.mnk
        return m * n * k


@dataclass
class Catalog:
    arch: str
    instructions: List[Instruction]
    banks: int = 32
    bank_bytes: int = 4
    tma_max_dims: int = 5
    tma_align_bytes: int = 16
    tma_max_box: int = 256
    by_name: Dict[str, Instruction] = field(default_factory=dict)

    def __post_init__(self):
        self.by_name = {i.name: i for i in self.instructions}

    def alu(self) -> Instruction:
        for inst in self.instructions:
            if inst.category == "alu":
                return inst
        return Instruction("alu_default", "alu", 1, 8, self.arch)


# ---------------------------------------------------------------- loading

_HEADER_KEYS = {
    "banks", "bank_bytes", "tma_max_dims", "tma_align_bytes", "tma_max_box",
}

_COPY_KEYS = {
    "scopes", "vector_bytes", "threads", "issue", "completion", "generic",
    "element_bits", "tile", "tv_src", "tv_dst", "tma",
}

_MMA_KEYS = {
    "mnk", "dtypes", "tv_a", "tv_b", "tv_c", "threads", "issue", "completion",
}

_ALU_KEYS = {"issue", "completion"}

_SCOPES = {"Global", "Shared", "Register"}


def _parse_tile(text: str) -> Tuple[int, ...]:
    body = text.strip()
    if not (body.startswith("(") and body.endswith(")")):
        raise CatalogFormatError(f"bad tile {text!r}")
    return tuple(int(x) for x in body[1:-1].split(","))


def load_catalog(path) -> Catalog:
    """Load and validate a catalog file.

    Unknown keys are rejected; explicit thread-value layouts must be
    bijections onto their tiles.
    """
    text = Path(path).read_text()
    arch = None
    header: Dict[str, int] = {}
    instructions: List[Instruction] = []
    record: Optional[Dict[str, str]] = None
    record_kind = ""
    record_name = ""

    def finish(kind: str, name: str, fields: Dict[str, str]) -> Instruction:
        def need(key: str) -> str:
            if key not in fields:
                raise CatalogFormatError(f"instruction {name}: missing key {key!r}")
            return fields[key]

        issue = int(need("issue"))
        completion = int(need("completion"))
        if issue < 1 or completion < 1:
            raise CatalogFormatError(f"instruction {name}: cycles must be >= 1")
        if kind == "copy":
            unknown = set(fields) - _COPY_KEYS
            if unknown:
                raise CatalogFormatError(f"instruction {name}: unknown keys {sorted(unknown)}")
            scopes = need("scopes").split()
            if len(scopes) != 2 or not set(scopes) <= _SCOPES:
                raise CatalogFormatError(f"instruction {name}: bad scopes {scopes}")
            vector_bytes = int(need("vector_bytes"))
            if vector_bytes not in (1, 2, 4, 8, 16):
                raise CatalogFormatError(
                    f"instruction {name}: vector_bytes must be one of 1,2,4,8,16"
                )
            generic = "generic" in fields
            tma = "tma" in fields
            inst = Instruction(
                name, "copy", issue, completion, arch or "",
                src_scope=scopes[0], dst_scope=scopes[1],
                vector_bytes=vector_bytes,
                threads=int(fields.get("threads", "32")),
                generic=generic,
                element_bits=int(fields.get("element_bits", "0")),
                tile=_parse_tile(fields["tile"]) if "tile" in fields else (),
                tv_src=parse_layout(fields["tv_src"]) if "tv_src" in fields else None,
                tv_dst=parse_layout(fields["tv_dst"]) if "tv_dst" in fields else None,
                tma=tma,
            )
            if not generic and not tma:
                if inst.tv_src is None or inst.tv_dst is None or not inst.tile:
                    raise CatalogFormatError(
                        f"instruction {name}: explicit entries need tile, tv_src, tv_dst"
                    )
                src, dst = TvLayout(inst.tv_src, inst.tile), TvLayout(inst.tv_dst, inst.tile)
                src.check_bijective(f"{name}.tv_src")
                dst.check_bijective(f"{name}.tv_dst")
                if src.threads != inst.threads or dst.threads != inst.threads:
                    raise CatalogFormatError(
                        f"instruction {name}: thread mode size != threads field"
                    )
            return inst
        if kind == "mma":
            unknown = set(fields) - _MMA_KEYS
            if unknown:
                raise CatalogFormatError(f"instruction {name}: unknown keys {sorted(unknown)}")
            m, n, k = (int(x) for x in need("mnk").split())
            da, db, dc = need("dtypes").split()
            inst = Instruction(
                name, "mma", issue, completion, arch or "",
                threads=int(fields.get("threads", "32")),
                mnk=(m, n, k), dtype_a=da, dtype_b=db, dtype_c=dc,
                tv_a=parse_layout(need("tv_a")),
                tv_b=parse_layout(need("tv_b")),
                tv_c=parse_layout(need("tv_c")),
            )
            a, b, c = inst.mma_layouts()
            a.check_bijective(f"{name}.tv_a")
            b.check_bijective(f"{name}.tv_b")
            c.check_bijective(f"{name}.tv_c")
            return inst
        if kind == "alu":
            unknown = set(fields) - _ALU_KEYS
            if unknown:
                raise CatalogFormatError(f"instruction {name}: unknown keys {sorted(unknown)}")
            return Instruction(name, "alu", issue, completion, arch or "")
        raise CatalogFormatError(f"unknown record kind {kind!r}")

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split(None, 1)
        head = words[0]
        rest = words[1] if len(words) > 1 else ""
        if record is None:
            if head == "catalog":
                if arch is not None:
                    raise CatalogFormatError(f"line {lineno}: duplicate catalog header")
                arch = rest.strip()
            elif head in _HEADER_KEYS:
                header[head] = int(rest)
            elif head in ("copy", "mma", "alu"):
                record = {}
                record_kind = head
                record_name = rest.strip()
                if not record_name:
                    raise CatalogFormatError(f"line {lineno}: record needs a name")
            else:
                raise CatalogFormatError(f"line {lineno}: unknown key {head!r}")
        else:
            if head == "end":
                instructions.append(finish(record_kind, record_name, record))
                record = None
            elif head in ("generic", "tma") and not rest:
                record[head] = "true"
            else:
                record[head] = rest.strip()
    if record is not None:
        raise CatalogFormatError("unterminated instruction record")
    if arch is None or not instructions:
        raise CatalogFormatError("catalog needs a header and at least one instruction")
    names = [i.name for i in instructions]
    if len(names) != len(set(names)):
        raise CatalogFormatError("duplicate instruction names")
    return Catalog(arch, instructions, **{k: v for k, v in header.items()})


def builtin_catalog_path(arch: str = "sm80") -> Path:
    return DATA_DIR / f"{arch}.cat"


# ---------------------------------------------------------------- queries


def candidates_for_copy(
    cat: Catalog, src: TensorDecl, dst: TensorDecl
) -> List[Instruction]:
    """Compatible copy instructions, widest vector first.

    The narrowest dtype-compatible entry acts as the scalar fallback.
    Register-to-register moves need no instruction and return [].
    """
    if src.scope == "Register" and dst.scope == "Register":
        return []
    dtype = src.dtype
    out = [
        inst
        for inst in cat.instructions
        if inst.category == "copy"
        and not inst.tma
        and inst.src_scope == src.scope
        and inst.dst_scope == dst.scope
        and inst.supports_dtype(dtype)
    ]
    if not out:
        raise NoInstructionAvailable(
            f"no copy instruction for {src.scope}->{dst.scope} {dtype}"
        )
    out.sort(key=lambda i: (-i.vector_bytes, i.name))
    return out


def tma_candidates(cat: Catalog, src: TensorDecl, dst: TensorDecl) -> List[Instruction]:
    return [
        inst
        for inst in cat.instructions
        if inst.category == "copy"
        and inst.tma
        and inst.src_scope == src.scope
        and inst.dst_scope == dst.scope
    ]


def fastest_mma(cat: Catalog, a_dtype: DType, b_dtype: DType, c_dtype: DType) -> Instruction:
    """The compatible matrix instruction with the best issue-per-MAC rank."""
    matches = [
        inst
        for inst in cat.instructions
        if inst.category == "mma"
        and inst.dtype_a == a_dtype.name
        and inst.dtype_b == b_dtype.name
        and inst.dtype_c == c_dtype.name
    ]
    if not matches:
        raise NoInstructionAvailable(
            f"no matrix instruction for {a_dtype} x {b_dtype} -> {c_dtype}"
        )
    matches.sort(key=lambda i: (i.issue_cycles / i.macs(), i.name))
    return matches[0]
