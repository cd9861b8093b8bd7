"""More local steps per round: faster start, slightly higher floor.

Same problem, same seed, same fixed learning rate; only K changes.  With more
local work per round each client drifts towards its own optimum before
averaging, so progress per round is larger but the averaged point settles a
little away from the global optimum.
"""

from dcfpca import Hyperparams
from dcfpca.evaluation import error_floor, k_ablation, rounds_to_threshold
from dcfpca.problem import generate

prob = generate(100, 100, 5, 0.01, seed=0)
traces = k_ablation(prob, Hyperparams(p=5, T=100, seed=0), [1, 3, 10], eta=0.01, E=10, out_dir="ablation")

for k, tr in traces.items():
    errs = tr.rel_errors
    print(f"K={k:2d}  err after 1/5/20 rounds: {errs[0]:.2e} {errs[4]:.2e} {errs[19]:.2e}  "
          f"rounds to 0.05: {rounds_to_threshold(tr, 0.05)}  floor: {error_floor(tr):.3e}")
print("traces written to ablation/ablation_K<k>.csv")
