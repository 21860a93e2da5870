"""Nested integer tuples: the shape/stride building blocks of layouts.

An *IntTuple* is either a nonnegative ``int`` or a ``tuple`` of IntTuples,
nested to arbitrary depth.  Linear indices decompose colexicographically:
the first (leftmost) leaf varies fastest.
"""

from __future__ import annotations

from typing import Iterator, Tuple, Union

from .errors import IntegerOverflow, ParseError, ShapeMismatch

IntTuple = Union[int, Tuple["IntTuple", ...]]

INT64_MAX = 2**63 - 1


def is_int(t: IntTuple) -> bool:
    return isinstance(t, int)


def validate(t: IntTuple, *, min_leaf: int = 0) -> None:
    """Check every leaf is an int in [min_leaf, 2^63)."""
    if isinstance(t, int):
        if t < min_leaf:
            raise ShapeMismatch(f"leaf {t} below minimum {min_leaf}")
        if t > INT64_MAX:
            raise IntegerOverflow(f"leaf {t} exceeds 64-bit range")
        return
    if not isinstance(t, tuple):
        raise ShapeMismatch(f"expected int or tuple, got {type(t).__name__}")
    for item in t:
        validate(item, min_leaf=min_leaf)


def congruent(a: IntTuple, b: IntTuple) -> bool:
    """True when a and b have identical nesting structure."""
    if isinstance(a, int) and isinstance(b, int):
        return True
    if isinstance(a, int) or isinstance(b, int):
        return False
    return len(a) == len(b) and all(congruent(x, y) for x, y in zip(a, b))


def flatten(t: IntTuple) -> Tuple[int, ...]:
    """All leaves of t in colexicographic (left-to-right) order."""
    if isinstance(t, int):
        return (t,)
    out: list = []
    for item in t:
        out.extend(flatten(item))
    return tuple(out)


def size(t: IntTuple) -> int:
    """Product of all leaves."""
    if isinstance(t, int):
        return t
    n = 1
    for item in t:
        n *= size(item)
    return n


def depth(t: IntTuple) -> int:
    if isinstance(t, int):
        return 0
    return 1 + max((depth(item) for item in t), default=0)


def zip_leaves(shape: IntTuple, stride: IntTuple) -> Iterator[Tuple[int, int]]:
    """Yield (shape leaf, stride leaf) pairs in colex order."""
    if isinstance(shape, int):
        if not isinstance(stride, int):
            raise ShapeMismatch("shape and stride not congruent")
        yield shape, stride
        return
    if isinstance(stride, int) or len(shape) != len(stride):
        raise ShapeMismatch("shape and stride not congruent")
    for s, d in zip(shape, stride):
        yield from zip_leaves(s, d)


def decode(index: int, shape: IntTuple) -> Tuple[int, ...]:
    """Decompose a linear index into flat digits, first leaf fastest."""
    digits = []
    for leaf in flatten(shape):
        digits.append(index % leaf)
        index //= leaf
    return tuple(digits)


def encode(digits: Tuple[int, ...], shape: IntTuple) -> int:
    """Inverse of :func:`decode`."""
    index = 0
    weight = 1
    for digit, leaf in zip(digits, flatten(shape)):
        index += digit * weight
        weight *= leaf
    return index


def format_tuple(t: IntTuple) -> str:
    if isinstance(t, int):
        return str(t)
    return "(" + ",".join(format_tuple(item) for item in t) + ")"


def parse_tuple(text: str) -> IntTuple:
    """Parse "((2,4),(2,2))" style nested tuples (whitespace-insensitive)."""
    tokens = text.replace(" ", "").replace("\t", "")
    node, pos = _parse_node(tokens, 0)
    if pos != len(tokens):
        raise ParseError(f"trailing characters in tuple: {tokens[pos:]!r}")
    return node


def _parse_node(s: str, pos: int):
    if pos >= len(s):
        raise ParseError("unexpected end of tuple")
    if s[pos] == "(":
        pos += 1
        items = []
        if pos < len(s) and s[pos] == ")":
            raise ParseError("empty tuple")
        while True:
            node, pos = _parse_node(s, pos)
            items.append(node)
            if pos >= len(s):
                raise ParseError("unterminated tuple")
            if s[pos] == ",":
                pos += 1
                continue
            if s[pos] == ")":
                return tuple(items), pos + 1
            raise ParseError(f"unexpected character {s[pos]!r} in tuple")
    start = pos
    while pos < len(s) and s[pos].isdigit():
        pos += 1
    if start == pos:
        raise ParseError(f"expected integer at {s[pos:]!r}")
    return int(s[start:pos]), pos
