"""tilesynth: layout synthesis for tile-level GPU programs on the CPU.

Core pieces:

- :mod:`tilesynth.layout` -- hierarchical (shape : stride) layouts with
  composition, inversion, complement, and restriction.
- :mod:`tilesynth.tv` -- thread-value layouts over tiles.
- :mod:`tilesynth.ir` -- the tile-program text format and validator.
- :mod:`tilesynth.catalog` -- data-driven collective-instruction models.
- :mod:`tilesynth.synth` -- constraint propagation and instruction search.
- :mod:`tilesynth.smem` -- shared-memory layout constraints and swizzles.
- :mod:`tilesynth.cost` -- the analytical latency model.
- :mod:`tilesynth.pipeline` -- one-call synthesis over a parsed program.
"""

from .catalog import Catalog, Instruction, builtin_catalog_path, load_catalog
from .ir import ProgramGraph, parse_program, validate
from .layout import (
    Layout,
    coalesce,
    complement,
    compose,
    concat,
    dim_restrict,
    inverse,
    parse_layout,
    restrict_first_mode,
)
from .pipeline import SynthesisResult, synthesize_program
from .swizzle import Swizzle, bank_conflicts
from .synth import SynthesisConfig
from .tv import TvLayout

__version__ = "0.1.0"

__all__ = [
    "Catalog",
    "Instruction",
    "Layout",
    "ProgramGraph",
    "SynthesisConfig",
    "SynthesisResult",
    "Swizzle",
    "TvLayout",
    "bank_conflicts",
    "builtin_catalog_path",
    "coalesce",
    "complement",
    "compose",
    "concat",
    "dim_restrict",
    "inverse",
    "load_catalog",
    "parse_layout",
    "parse_program",
    "restrict_first_mode",
    "synthesize_program",
    "validate",
]
