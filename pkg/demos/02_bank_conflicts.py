#!/usr/bin/env python3
"""Bank conflicts and XOR swizzles on a 64x64 half-precision tile.

Shared memory is modeled as 32 banks of 4-byte words.  Reading a
row-major tile column-wise puts every thread in the same bank; an XOR
swizzle permutes addresses so the same access pattern spreads across
all banks.
"""

from tilesynth.swizzle import (
    IDENTITY_SWIZZLE,
    AccessPattern,
    Swizzle,
    bank_conflicts,
    score_swizzles,
)

ROW_BYTES = 128  # 64 half-precision elements per row

# Each of 32 threads loads a 16-byte chunk of a different row: the
# classic column-style access of a collective matrix load.
column_access = AccessPattern(tuple(ROW_BYTES * t for t in range(32)), 16)

# Row-wise stores: 8 threads per row, 16 bytes each.
row_access = AccessPattern(
    tuple(ROW_BYTES * (t // 8) + 16 * (t % 8) for t in range(32)), 16
)

print("identity swizzle:")
print("  column access:", bank_conflicts(column_access), "way")
print("  row access:   ", bank_conflicts(row_access), "way")

# Score the whole candidate family over both phases and pick the best.
best, total = score_swizzles([lambda sw: [column_access, row_access]])
print(f"\nselected swizzle: {best} (total score {total})")
print("  column access:", bank_conflicts(column_access, best), "way")
print("  row access:   ", bank_conflicts(row_access, best), "way")

# Show the bank table for the first 8 rows, before and after.
def bank_table(swizzle):
    rows = []
    for r in range(8):
        banks = [
            (swizzle(ROW_BYTES * r + 16 * c) // 4) % 32 for c in range(8)
        ]
        rows.append(" ".join(f"{b:2d}" for b in banks))
    return rows

print("\nbanks of each 16B chunk, first 8 rows (identity):")
for line in bank_table(IDENTITY_SWIZZLE):
    print("   ", line)
print(f"\nsame, under {best}:")
for line in bank_table(best):
    print("   ", line)

print("\nswizzles permute every aligned block, so no data is lost:")
sw = Swizzle(3, 3, 3)
block = list(range(512))
assert sorted(sw(a) for a in block) == block
print("  SW(3,3,3) over [0,512): bijection confirmed")
