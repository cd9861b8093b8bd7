"""Map where recovery succeeds as corruption and rank grow.

Each cell is an independent run on a freshly drawn problem with the rank bound
set to the true rank.  Pass --full for the 6 x 4 grid at m = n = 100 (a couple
of minutes); the default is a quick 3 x 2 grid at m = n = 60.
"""

import sys

import numpy as np

from dcfpca import Hyperparams
from dcfpca.evaluation import SUCCESS_THRESHOLD, default_sweep_grid, phase_sweep

if "--full" in sys.argv:
    n = 100
    s_grid, r_grid = default_sweep_grid(n)
else:
    n = 60
    s_grid, r_grid = [0.05, 0.15, 0.3], [3, 12]

hp = Hyperparams(E=10, K=2, T=50, inner_max_iters=100, seed=0)
res = phase_sweep(n, n, s_grid, r_grid, hp, out_csv="sweep.csv")

print("rows: rank r, columns: sparsity s  (o = err < %g)" % SUCCESS_THRESHOLD)
print("      " + "".join(f"{s:>10.2f}" for s in s_grid))
for r, row in zip(r_grid, res.errors):
    cells = "".join(f"{e:>9.1e}{'o' if e < SUCCESS_THRESHOLD else ' '}" for e in row)
    print(f"r={r:<4d}{cells}")
print("written to sweep.csv")
if res.notes:
    print("failed cells:", res.notes)
