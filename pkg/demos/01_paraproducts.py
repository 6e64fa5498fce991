# Littlewood-Paley blocks, the Bony split and commutator ratios on a small grid.

import numpy as np

from gevreybl import dyadic
from gevreybl.checks import random_field
from gevreybl.grid import Grid, product
from gevreybl.spaces import PhaseState

grid = Grid(128, 33)
part = dyadic.make_partition(grid)
print("blocks:", list(part.blocks))
total = sum(part.block_symbol(k) for k in part.blocks)
print("max |sum_k phi_k - 1| =", np.max(np.abs(total - 1)))

rng = np.random.default_rng(7)
f = random_field(grid, rng, decaying=True)
g = random_field(grid, rng, decaying=True)
b = random_field(grid, rng, decaying=True)

# fg splits into two para-products and a remainder, exactly
split = dyadic.paraproduct(f, g) + dyadic.paraproduct(g, f) + dyadic.remainder(f, g)
print("Bony defect:", (product(f, g) - split).max_abs())

# where does the energy of fg sit?
for name, piece in [("T_f g", dyadic.paraproduct(f, g)), ("T_g f", dyadic.paraproduct(g, f)),
                    ("R(f,g)", dyadic.remainder(f, g))]:
    print(f"  {name:7s} max = {piece.max_abs():.3e}")

# commutator left-hand sides over their right-hand norm products
rep = dyadic.commutator_suite(f, g, s=2.0, b=b, phase=PhaseState(0.1, 1.0, 0.02))
for name, r in rep.items():
    print(f"  {name:24s} ratio {r['ratio']:.3e}")
