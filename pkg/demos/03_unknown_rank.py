"""Over-parameterize the rank and read off the spectrum of the recovery.

With the rank bound p = 2r the factors have room for spurious directions.
The ridge term on U and V keeps them small, so the recovered spectrum shows
r large values followed by a sharp drop.
"""

import numpy as np

from dcfpca import Hyperparams, evaluate, run
from dcfpca.problem import generate

n, r, p = 200, 10, 20
prob = generate(n, n, r, 0.05, seed=3)
server, clients, trace = run(prob, Hyperparams(p=p, E=10, K=2, T=50, inner_max_iters=100))
rep = evaluate(server, clients, prob)

np.set_printoptions(precision=3, suppress=True)
print("truth      :", rep.sv_truth)
print("recovered  :", rep.sv_recovered[:r])
print("tail       :", rep.sv_recovered[r:])
print(f"max |sigma_i - sigma_i(L0)| / sigma_r(L0) = {rep.sv_rel_error:.4f}")
print(f"sigma_(r+1) / sigma_r = {rep.rank_gap_ratio:.4f}")
print(f"relative error {rep.rel_error:.2e}")
