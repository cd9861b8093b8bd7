"""Build a synthetic instance and split it across clients.

A rank-r matrix is corrupted on a random s-fraction of its entries by spikes
of size sqrt(m n).  The observed matrix is then cut into contiguous column
blocks, one per client.
"""

import numpy as np

from dcfpca.problem import generate, incoherence_check, partition
from dcfpca.matrix import singular_values_lowrank

m, n, r, s = 120, 90, 4, 0.05
prob = generate(m, n, r, s, seed=1)

print(f"M is {prob.M.shape}, L0 has rank {r}, S0 has {np.count_nonzero(prob.S0)} spikes")
print("spike magnitudes:", np.unique(np.abs(prob.S0[prob.S0 != 0])))

# the spikes dwarf the low-rank entries
print(f"typical |L0| entry {np.median(np.abs(prob.L0)):.2f}, spike {np.sqrt(m * n):.1f}")

sv = singular_values_lowrank(prob.U0, prob.V0)
print("singular values of L0:", np.round(sv, 2))

# incoherence: row leverage lands a few times above r/m, far from the spiky extreme of 1
rep = incoherence_check(prob, delta=50.0)
print(f"max row leverage U {rep.max_row_leverage_U:.4f} vs r/m = {r / m:.4f}")
print(f"max row leverage V {rep.max_row_leverage_V:.4f} vs r/n = {r / n:.4f}")
print("incoherent at delta=50:", rep.satisfied)

part = partition(prob, 7)
print("client column ranges:", part.col_ranges)
print("widths:", part.widths)

blocks = [prob.block(part, i) for i in range(part.client_count)]
assert np.array_equal(np.hstack(blocks), prob.M)
print("blocks reassemble M exactly")
