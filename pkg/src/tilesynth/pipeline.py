"""End-to-end synthesis: parse, validate, search, rank."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

from .catalog import Catalog
from .cost import rank
from .errors import TileSynthError
from .ir import ProgramGraph, eliminate_dead_code, validate
from .synth import Candidate, SynthesisConfig, expand_search


@dataclass
class SynthesisResult:
    graph: ProgramGraph
    config: SynthesisConfig
    catalog: Catalog
    diagnostics: List[str] = field(default_factory=list)
    candidates: List[Candidate] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        if self.diagnostics:
            return False
        return bool(self.candidates) or not self.graph.ops

    @property
    def best(self) -> Optional[Candidate]:
        return self.candidates[0] if self.candidates else None


def synthesize_program(
    graph: ProgramGraph, catalog: Catalog, config: Optional[SynthesisConfig] = None
) -> SynthesisResult:
    """Validate, eliminate dead code, search, and rank candidates.

    Synthesis failures are reported as diagnostics, not raised: callers
    inspect ``result.ok``.
    """
    config = config or SynthesisConfig()
    diagnostics = validate(graph)
    if diagnostics:
        return SynthesisResult(graph, config, catalog, diagnostics)
    live = eliminate_dead_code(graph)
    if graph.ops and not live.ops:
        return SynthesisResult(
            live, config, catalog, ["all operations are dead code (no global store)"]
        )
    try:
        candidates = expand_search(live, catalog, config)
    except TileSynthError as e:
        return SynthesisResult(live, config, catalog, [str(e)])
    if live.ops and not candidates:
        return SynthesisResult(
            live, config, catalog, ["no valid candidate: every instruction assignment failed"]
        )
    ranked = rank(candidates, live, catalog)
    return SynthesisResult(live, config, catalog, [], ranked)
