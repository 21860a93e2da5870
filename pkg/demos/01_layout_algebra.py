#!/usr/bin/env python3
"""Layouts as integer functions: a guided tour of the algebra.

A layout is a pair of congruent nested tuples (shape : stride).  It maps
an index to sum(digit * stride) where linear indices decompose with the
first (leftmost) leaf varying fastest.  Everything else in this package
is built from composing, inverting, and restricting these functions.
"""

from tilesynth import (
    coalesce,
    complement,
    compose,
    concat,
    inverse,
    parse_layout,
    restrict_first_mode,
)

# ---------------------------------------------------------------------
# 1. Evaluation: a 4x8 tile stored in row-major-interleaved order.
# ---------------------------------------------------------------------
m = parse_layout("((2,2),8):((1,16),2)")
print("layout m =", m)
print("m(2, 4) =", m((2, 4)), "   # coordinates (2,4) land at address 24")

# A register-tensor distribution: (thread, value) -> tile position.
f = parse_layout("((2,4),(2,2)):((8,1),(4,16))")
pos = f((2, 3))
print("\nthread-value layout f =", f)
print(f"f(t=2, v=3) = {pos}  -> tile coords ({pos % 4}, {pos // 4})")

# ---------------------------------------------------------------------
# 2. Coalescing: the canonical form merges mergeable leaves.
# ---------------------------------------------------------------------
print("\ncoalesce (2,4):(1,2)   =", coalesce(parse_layout("(2,4):(1,2)")))
print("coalesce (1,8):(0,1)   =", coalesce(parse_layout("(1,8):(0,1)")))
print("coalesce", m, "=", coalesce(m), " # nothing merges here")

# ---------------------------------------------------------------------
# 3. Composition and inversion: relating two distributions of one tile.
#
# q describes how a 32-thread collective load deposits a 32x8 tile into
# registers.  Its inverse maps tile positions back to (thread, value).
# ---------------------------------------------------------------------
q_inv = parse_layout("((8,4),(2,4)):((4,64),(32,1))")
q = inverse(q_inv)
print("\nq^-1 =", q_inv)
print("q    =", q, " # recovered by inversion")
print("round trip:", inverse(q) == coalesce(q_inv))

# g distributes a 16x32 tile across 64 threads, 8 values each.  Restrict
# it to the 32 threads of one collective load, then compose with q^-1 to
# see where the instruction's tile lands inside the bigger tensor.
g = parse_layout("((4,8,2),(2,2,2)):((32,1,128),(16,8,256))")
g32 = restrict_first_mode(g, 32)
placement = compose(g32, q_inv)
print("\ng restricted to 32 threads =", g32)
print("g o q^-1 =", placement)
val = placement((17, 5))
print(f"placement(17, 5) = {val} -> coords ({val % 16}, {val // 16}) in the 16x32 tile")

# ---------------------------------------------------------------------
# 4. Complement: the gap-filler that completes a layout to a bijection.
# ---------------------------------------------------------------------
a = parse_layout("(4):(2)")
comp = complement(a, 8)
both = concat(a, comp)
print("\ncomplement of", a, "within [0,8) =", comp)
print("images interleave:", sorted(both(i) for i in range(8)))
