"""XOR swizzles over byte addresses and a shared-memory bank-conflict model.

The bank model is 32 banks of 4-byte words.  Accesses wider than 4 bytes
split into phases: an 8-byte access runs as 2 phases of 16 threads, a
16-byte access as 4 phases of 8 threads.  The conflict degree of a phase
is the maximum, over banks, of distinct word addresses touched in that
bank; 1 means conflict-free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, List, Sequence, Tuple

from .errors import MisalignedAccess

NUM_BANKS = 32
BANK_BYTES = 4

VALID_WIDTHS = (1, 2, 4, 8, 16)


@dataclass(frozen=True, order=True)
class Swizzle:
    """addr ^ (((addr >> (base + shift)) % 2^bits) << base).

    ``bits`` selects how many address bits are XORed, ``base`` where they
    land, and ``shift`` how far above the target field the source bits
    sit.  ``bits == 0`` is the identity.  ``shift >= bits`` keeps the
    source and target fields disjoint.
    """

    bits: int
    base: int
    shift: int

    def __post_init__(self):
        if self.bits < 0 or self.base < 0:
            raise ValueError("swizzle fields must be nonnegative")
        if self.bits > 0 and self.shift < self.bits:
            raise ValueError("swizzle source and target fields overlap")

    def __call__(self, addr: int) -> int:
        if addr < 0:
            raise ValueError("swizzle expects a nonnegative address")
        if self.bits == 0:
            return addr
        mask = (1 << self.bits) - 1
        return addr ^ (((addr >> (self.base + self.shift)) & mask) << self.base)

    @property
    def is_identity(self) -> bool:
        return self.bits == 0

    def __str__(self) -> str:
        return f"SW({self.bits},{self.base},{self.shift})"


IDENTITY_SWIZZLE = Swizzle(0, 4, 3)


def apply_swizzle(s: Swizzle, addr: int) -> int:
    return s(addr)


@dataclass(frozen=True)
class AccessPattern:
    """Byte addresses issued by one warp-wide access, one per thread."""

    addresses: Tuple[int, ...]
    width: int

    def __post_init__(self):
        if self.width not in VALID_WIDTHS:
            raise MisalignedAccess(f"unsupported access width {self.width}")
        for a in self.addresses:
            if a % self.width != 0:
                raise MisalignedAccess(
                    f"address {a} not aligned to width {self.width}"
                )


def bank_conflicts(pattern: AccessPattern, swizzle: Swizzle = IDENTITY_SWIZZLE) -> int:
    """Maximum-way bank conflict over all transaction phases.

    Returns 1 for a conflict-free pattern (and for an empty one).
    """
    addrs = [swizzle(a) for a in pattern.addresses]
    for a in addrs:
        if a % pattern.width != 0:
            raise MisalignedAccess(
                f"swizzled address {a} breaks {pattern.width}-byte alignment"
            )
    width = pattern.width
    if width <= BANK_BYTES:
        phase_size = len(addrs)
        words_per_access = 1
    else:
        words_per_access = width // BANK_BYTES
        phase_size = max(1, len(addrs) * BANK_BYTES // width)
    worst = 1
    for start in range(0, len(addrs), phase_size):
        phase = addrs[start : start + phase_size]
        banks: dict = {}
        for a in phase:
            word = a // BANK_BYTES
            for k in range(words_per_access):
                banks.setdefault((word + k) % NUM_BANKS, set()).add(word + k)
        if banks:
            worst = max(worst, max(len(words) for words in banks.values()))
    return worst


PatternGenerator = Callable[[Swizzle], Iterable[AccessPattern]]


def candidate_swizzles(min_base: int = 2) -> List[Swizzle]:
    """The scored swizzle family: identity plus small XOR swizzles.

    Covers the common 32/64/128-byte variants; base >= min_base keeps
    vector atoms of 2^min_base bytes intact.
    """
    out = [IDENTITY_SWIZZLE]
    for bits in (1, 2, 3):
        for base in (2, 3, 4):
            if base < min_base:
                continue
            for shift in range(bits, 7):
                out.append(Swizzle(bits, base, shift))
    return out


def score_swizzles(
    generators: Sequence[PatternGenerator],
    candidates: Sequence[Swizzle] = (),
) -> Tuple[Swizzle, int]:
    """Pick the candidate minimizing total max-way conflicts over patterns.

    Ties break toward smaller (bits, base, shift); the identity swizzle is
    always scored, so the result never beats identity's total.  Returns
    (best swizzle, its total conflict score).
    """
    pool = list(candidates) if candidates else candidate_swizzles()
    if IDENTITY_SWIZZLE not in pool:
        pool.insert(0, IDENTITY_SWIZZLE)
    best: Tuple[int, int, int, int] = None  # type: ignore[assignment]
    best_sw = IDENTITY_SWIZZLE
    for sw in sorted(pool, key=lambda s: (s.bits, s.base, s.shift)):
        total = 0
        try:
            for gen in generators:
                for pattern in gen(sw):
                    total += bank_conflicts(pattern, sw)
        except MisalignedAccess:
            continue  # swizzle would split a vector access; ineligible
        key = (total, sw.bits, sw.base, sw.shift)
        if best is None or key < best:
            best = key
            best_sw = sw
    return best_sw, (best[0] if best is not None else 0)
