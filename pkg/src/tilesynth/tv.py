"""Thread-value layouts: two-mode layouts mapping (thread, value) to tiles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

from . import inttuple as it
from .errors import NonBijectiveLayout, ShapeMismatch
from .layout import Layout, coalesce, restrict_mode_split


@dataclass(frozen=True)
class TvLayout:
    """A layout with exactly two top-level modes: (thread, value).

    Maps a thread id and per-thread value index to a linear position in a
    tile; ``tile`` gives the extents used to decode positions back into
    coordinates (first extent fastest).
    """

    layout: Layout
    tile: Tuple[int, ...]

    def __post_init__(self):
        if self.layout.rank != 2:
            raise ShapeMismatch(
                f"thread-value layout needs exactly 2 modes, got {self.layout}"
            )
        # Flat per-mode digit tables make position() a tight loop.
        object.__setattr__(self, "_tmodes", self.layout.mode(0).flat_modes())
        object.__setattr__(self, "_vmodes", self.layout.mode(1).flat_modes())

    @property
    def threads(self) -> int:
        return it.size(self.layout.shape[0])

    @property
    def values(self) -> int:
        return it.size(self.layout.shape[1])

    @property
    def tile_size(self) -> int:
        n = 1
        for e in self.tile:
            n *= e
        return n

    def position(self, t: int, v: int) -> int:
        if not 0 <= t < self.threads or not 0 <= v < self.values:
            raise ShapeMismatch(f"(t={t}, v={v}) outside layout domain")
        total = 0
        for s, d in self._tmodes:  # type: ignore[attr-defined]
            total += (t % s) * d
            t //= s
        for s, d in self._vmodes:  # type: ignore[attr-defined]
            total += (v % s) * d
            v //= s
        return total

    def coords(self, t: int, v: int) -> Tuple[int, ...]:
        return it.decode(self.position(t, v), self.tile)

    def check_bijective(self, name: str = "layout") -> None:
        """Must cover [0, tile size) exactly once."""
        if self.threads * self.values != self.tile_size:
            raise NonBijectiveLayout(
                f"{name}: {self.threads}x{self.values} values vs tile of "
                f"{self.tile_size}"
            )
        seen = set()
        for t in range(self.threads):
            for v in range(self.values):
                seen.add(self.position(t, v))
        if len(seen) != self.tile_size or min(seen) != 0 or max(seen) != self.tile_size - 1:
            raise NonBijectiveLayout(f"{name} is not a bijection onto its tile")

    def is_surjective(self) -> bool:
        hit = set()
        for t in range(self.threads):
            for v in range(self.values):
                hit.add(self.position(t, v))
        return hit == set(range(self.tile_size))

    def same_function(self, other: "TvLayout") -> bool:
        """Pointwise equality over the full (thread, value) domain."""
        if self.threads != other.threads or self.values != other.values:
            return False
        if self.tile_size != other.tile_size:
            return False
        if tv_coalesced_key(self) == tv_coalesced_key(other):
            return True
        return all(
            self.position(t, v) == other.position(t, v)
            for t in range(self.threads)
            for v in range(self.values)
        )

    def __str__(self) -> str:
        return str(self.layout)


def make_tv(layout: Layout, tile: Tuple[int, ...]) -> TvLayout:
    return TvLayout(layout, tuple(tile))


def tv_from_mode_lists(
    thread_modes: List[Tuple[int, int]],
    value_modes: List[Tuple[int, int]],
    tile: Tuple[int, ...],
) -> TvLayout:
    """Assemble a TV layout from flat per-mode (shape, stride) runs."""

    def pack(modes: List[Tuple[int, int]]):
        modes = [(s, d) for s, d in modes if s > 1]
        if not modes:
            return 1, 0
        if len(modes) == 1:
            return modes[0][0], modes[0][1]
        return tuple(s for s, _ in modes), tuple(d for _, d in modes)

    ts, td = pack(thread_modes)
    vs, vd = pack(value_modes)
    return TvLayout(Layout((ts, vs), (td, vd)), tuple(tile))


def restrict_tv(
    tv: TvLayout, threads: int, values: int
) -> Tuple[TvLayout, List[Tuple[int, int]], List[Tuple[int, int]]]:
    """Keep the colex-fastest (threads x values) sub-domain.

    Returns the restricted layout plus the dropped thread and value
    (shape, stride) leaves, used to rebuild outer repetition digits.
    """
    inner, dropped_t = restrict_mode_split(tv.layout, 0, threads)
    inner, dropped_v = restrict_mode_split(inner, 1, values)
    return TvLayout(inner, tv.tile), dropped_t, dropped_v


def filter_replication(tv: TvLayout) -> TvLayout:
    """Drop zero-stride digits: the deduplicated access sub-layout.

    Broadcast digits replicate the same positions across threads or
    values; the remaining digits cover each position exactly once when
    the original layout was surjective with uniform multiplicity.
    """
    thread = [(s, d) for s, d in tv.layout.mode(0).flat_modes() if d != 0 and s > 1]
    value = [(s, d) for s, d in tv.layout.mode(1).flat_modes() if d != 0 and s > 1]
    return tv_from_mode_lists(thread, value, tv.tile)


def tv_coalesced_key(tv: TvLayout) -> Tuple:
    """A canonical key: coalesced per-mode structure (for determinism)."""
    thread = coalesce(tv.layout.mode(0))
    value = coalesce(tv.layout.mode(1))
    return (thread.shape, thread.stride, value.shape, value.stride, tv.tile)
