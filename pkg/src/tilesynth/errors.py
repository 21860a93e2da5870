"""Exception hierarchy shared by all tilesynth modules."""


class TileSynthError(Exception):
    """Base class for all errors raised by this package."""


# ---------------------------------------------------------------- layouts


class LayoutError(TileSynthError):
    """Base class for layout-algebra errors."""


class ShapeMismatch(LayoutError):
    """A coordinate or operand does not match the expected shape structure."""


class OutOfDomain(LayoutError):
    """An index or coordinate lies outside a layout's domain."""


class LayoutIncompatible(LayoutError):
    """Two layouts cannot be combined (divisibility condition violated)."""


class NotInvertible(LayoutError):
    """The layout is not a bijection onto a contiguous index range."""


class NotComplementable(LayoutError):
    """No gap-filling layout exists for the requested codomain size."""


class NotDivisible(LayoutError):
    """A mode cannot be split at the requested size boundary."""


class IntegerOverflow(LayoutError):
    """A shape, stride, or index exceeds the supported 64-bit range."""


# ---------------------------------------------------------------- swizzles


class MisalignedAccess(TileSynthError):
    """A memory access is not aligned to its access width."""


# ---------------------------------------------------------------- program IR


class ParseError(TileSynthError):
    """Malformed program or catalog text.  Carries line/column info."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        if line:
            message = f"line {line}, col {column}: {message}"
        super().__init__(message)


class UnknownTensor(TileSynthError):
    """A statement references a tensor id that was never declared."""


class ArityError(TileSynthError):
    """An operation received the wrong number of operands."""


class UnknownOp(TileSynthError):
    """An operation index is out of range."""


# ---------------------------------------------------------------- catalog


class CatalogFormatError(TileSynthError):
    """Malformed instruction catalog file."""


class NonBijectiveLayout(TileSynthError):
    """A catalog instruction layout is not a bijection onto its tile."""


class NoInstructionAvailable(TileSynthError):
    """No catalog instruction is compatible with the request."""


# ---------------------------------------------------------------- synthesis


class NonDivisibleTile(TileSynthError):
    """A tensor extent is not divisible by the instruction/warp tiling."""


class UnsolvedResidual(TileSynthError):
    """Constraints remain unsolved after propagation reached a fixpoint."""


class ConflictDetected(TileSynthError):
    """A tensor received two different thread-value layouts."""

    def __init__(self, tensor: str, existing, incoming, op_index: int):
        self.tensor = tensor
        self.existing = existing
        self.incoming = incoming
        self.op_index = op_index
        super().__init__(
            f"tensor '{tensor}' assigned two different thread-value layouts "
            f"(op {op_index}): {existing} vs {incoming}"
        )


# ---------------------------------------------------------------- shared memory


class StrideConflict(TileSynthError):
    """Unified layout constraints force duplicate shared-memory addresses."""


class Unsatisfiable(TileSynthError):
    """Stride variables cannot be materialized into a bijective layout."""
