"""Numerical spot checks of the identities the algorithm rests on."""

import dataclasses

import numpy as np

from dcfpca import Hyperparams, validate_hyperparams
from dcfpca.local import (
    ClientState,
    InnerSolveConfig,
    grad_U_at_inner_opt,
    huber,
    inner_minimized_objective,
    soft_threshold,
    solve_inner,
)
from dcfpca.matrix import nuclear_norm_small

rng = np.random.default_rng(0)

# Partially minimizing 1/2 (x - s)^2 + lam |s| over s gives the Huber loss.
x, lam = np.linspace(-4, 4, 9), 1.5
s = soft_threshold(x, lam)
env = 0.5 * (x - s) ** 2 + lam * np.abs(s)
print("Huber = envelope of l1:", all(np.isclose(huber(a, lam), b) for a, b in zip(x, env)))

# Balanced factors attain the nuclear norm; any other split costs more.
A = rng.standard_normal((8, 3)) @ rng.standard_normal((3, 6))
left, sig, right = np.linalg.svd(A, full_matrices=False)
U, V = left * np.sqrt(sig), right.T * np.sqrt(sig)
print(f"nuclear norm {nuclear_norm_small(A):.6f}, balanced factor cost {0.5 * (np.sum(U**2) + np.sum(V**2)):.6f}")
print(f"unbalanced cost {0.5 * (np.sum((2 * U)**2) + np.sum((V / 2)**2)):.6f}")

# The U-gradient at the inner optimum matches a finite difference of g_i.
m, n_i, p, rho = 12, 7, 2, 1.0
M = rng.standard_normal((m, n_i)) * 3
st = ClientState(0, M, rng.standard_normal((m, p)), np.zeros((n_i, p)), np.zeros((m, n_i)), n=14)
cfg = InnerSolveConfig(rho=rho, lam=1.0, tol=1e-13, max_iters=100000)


def g(U):
    probe = dataclasses.replace(st, U_local=U)
    V, S, _, _ = solve_inner(probe, cfg)
    return inner_minimized_objective(probe, V, S, rho, 1.0)


V, S, _, _ = solve_inner(st, cfg)
grad = grad_U_at_inner_opt(st, V, S, rho)
D = rng.standard_normal(st.U_local.shape)
eps = 1e-6
fd = (g(st.U_local + eps * D) - g(st.U_local - eps * D)) / (2 * eps)
print(f"directional derivative: formula {np.sum(grad * D):.8f}, finite difference {fd:.8f}")

# rho^2 <= lam^2 m n is necessary for a global optimum.
for rho_, lam_ in [(1.0, 0.1), (10.0, 1e-3)]:
    w = validate_hyperparams(Hyperparams(rho=rho_, lam=lam_), 50, 50)
    print(f"rho={rho_}, lam={lam_}: {w[0] if w else 'ok'}")
