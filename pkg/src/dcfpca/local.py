"""Per-client computation for one consensus round.

At a fixed left factor ``U`` each client minimizes

    L_i(U, V, S) = 1/2 ||U V^T + S - M_i||_F^2 + rho/2 ||V||_F^2 + lam ||S||_1
                   + (n_i rho / 2n) ||U||_F^2

over its private ``(V, S)``.  Minimizing out ``S`` in closed form (soft
thresholding) leaves the smooth, rho-strongly convex function

    h(V) = rho/2 ||V||_F^2 + H_lam(M_i - U V^T)

with ``H_lam`` the entrywise Huber loss, which is solved by gradient descent.
The minimum value ``g_i(U)`` is differentiable in ``U`` and its gradient is the
partial gradient of ``L_i`` at the inner minimizer, which drives the local
steps on ``U``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .matrix import ShapeError

__all__ = [
    "InnerSolveConfig",
    "ClientState",
    "InnerResult",
    "huber",
    "huber_grad",
    "soft_threshold",
    "h_value_and_grad",
    "solve_inner",
    "local_objective",
    "inner_minimized_objective",
    "grad_U_at_inner_opt",
    "local_round",
    "estimate_local_smoothness",
]


@dataclass(frozen=True)
class InnerSolveConfig:
    """Settings for the inner ``(V, S)`` solve.

    ``step_size="auto"`` uses ``1 / (rho + ||U||_F^2)``, the reciprocal of the
    smoothness constant of ``h``.  The solve stops once
    ``||grad h||_F <= tol * max(1, ||V||_F)``.
    """

    rho: float = 1.0
    lam: float = 1.0
    tol: float = 1e-8
    max_iters: int = 500
    step_size: float | str = "auto"
    warm_start: bool = True

    def __post_init__(self):
        if self.rho <= 0 or self.lam <= 0:
            raise ValueError("rho and lam must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.step_size != "auto" and not (
            isinstance(self.step_size, (int, float)) and self.step_size > 0
        ):
            raise ValueError("step_size must be 'auto' or a positive number")

    def step_for(self, U):
        if self.step_size == "auto":
            return 1.0 / (self.rho + float(np.sum(U * U)))
        return float(self.step_size)


@dataclass
class ClientState:
    """One client's private data, iterates and local copy of ``U``.

    The trailing diagnostic fields are written by :func:`local_round`; they
    describe the round just finished and are read by the simulator's trace
    writer, never by the server.
    """

    id: int
    M_i: np.ndarray
    U_local: np.ndarray
    V_i: np.ndarray
    S_i: np.ndarray
    n: int
    inner_iters: int = 0
    converged: bool = True
    objective_at_broadcast: float = float("nan")
    grad_at_broadcast: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        m, n_i = self.M_i.shape
        p = self.U_local.shape[1]
        if self.U_local.shape != (m, p) or self.V_i.shape != (n_i, p) or self.S_i.shape != (m, n_i):
            raise ShapeError(
                f"inconsistent client shapes: M_i {self.M_i.shape}, U {self.U_local.shape}, "
                f"V {self.V_i.shape}, S {self.S_i.shape}"
            )
        if not 0 < n_i <= self.n:
            raise ShapeError(f"client width {n_i} not within total column count {self.n}")

    @property
    def n_i(self):
        return self.M_i.shape[1]


class InnerResult(NamedTuple):
    V: np.ndarray
    S: np.ndarray
    iters: int
    converged: bool


def huber(x, lam):
    """Huber loss, summed over entries when `x` is an array.

    Quadratic ``x^2/2`` on ``[-lam, lam]`` and linear ``lam|x| - lam^2/2`` outside.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    a = np.abs(np.asarray(x, dtype=np.float64))
    vals = np.where(a <= lam, 0.5 * a * a, lam * a - 0.5 * lam * lam)
    return float(np.sum(vals))


def huber_grad(x, lam):
    return np.clip(x, -lam, lam)


def soft_threshold(residual, lam):
    if lam <= 0:
        raise ValueError("lam must be positive")
    r = np.asarray(residual, dtype=np.float64)
    return np.sign(r) * np.maximum(np.abs(r) - lam, 0.0)


def _check_inner_shapes(V, U, M):
    if U.ndim != 2 or V.ndim != 2 or M.ndim != 2:
        raise ShapeError("U, V and M must all be 2-D")
    if U.shape[1] != V.shape[1] or M.shape != (U.shape[0], V.shape[0]):
        raise ShapeError(f"incompatible shapes U {U.shape}, V {V.shape}, M {M.shape}")


def h_value_and_grad(V, U, M, rho, lam):
    """Value and gradient of ``h(V) = rho/2 ||V||^2 + H_lam(M - U V^T)``.

    The gradient is ``rho V - H'_lam(M - U V^T)^T U``; the minus sign comes from
    differentiating through the residual.
    """
    V = np.asarray(V, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    _check_inner_shapes(V, U, M)
    R = M - U @ V.T
    value = 0.5 * rho * float(np.sum(V * V)) + huber(R, lam)
    grad = rho * V - huber_grad(R, lam).T @ U
    return value, grad


def solve_inner(state, cfg):
    """Minimize ``h`` over ``V`` by gradient descent, then recover ``S``.

    Starts from ``state.V_i`` (or zero when ``cfg.warm_start`` is off).  Hitting
    ``cfg.max_iters`` is not an error: the last iterate, which is also the best
    one since the step never exceeds ``1/L``, comes back with
    ``converged=False``.  ``iters`` counts gradient evaluations.
    """
    U, M = state.U_local, state.M_i
    V = state.V_i.copy() if cfg.warm_start else np.zeros_like(state.V_i)
    _check_inner_shapes(V, U, M)
    rho, lam, tol = cfg.rho, cfg.lam, cfg.tol
    step = cfg.step_for(U)

    converged = False
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        R = M - U @ V.T
        np.clip(R, -lam, lam, out=R)
        grad = rho * V - R.T @ U
        gnorm = np.sqrt(np.sum(grad * grad))
        if gnorm <= tol * max(1.0, np.sqrt(np.sum(V * V))):
            converged = True
            break
        V -= step * grad
    S = soft_threshold(M - U @ V.T, lam)
    return InnerResult(V, S, iters, converged)


def local_objective(state, rho, lam):
    """``L_i`` at the state's current ``(U_local, V_i, S_i)``."""
    U, V, S, M = state.U_local, state.V_i, state.S_i, state.M_i
    resid = U @ V.T + S - M
    return (
        0.5 * float(np.sum(resid * resid))
        + 0.5 * rho * float(np.sum(V * V))
        + lam * float(np.sum(np.abs(S)))
        + 0.5 * rho * state.n_i / state.n * float(np.sum(U * U))
    )


def inner_minimized_objective(state, V_star, S_star, rho, lam):
    """``g_i(U)`` evaluated at a given inner minimizer."""
    return local_objective(dataclasses.replace(state, V_i=V_star, S_i=S_star), rho, lam)


def grad_U_at_inner_opt(state, V_star, S_star, rho):
    """Gradient of ``g_i`` at ``state.U_local``.

    ``(U V*^T + S* - M_i) V* + (rho n_i / n) U``, which is valid only when
    ``(V*, S*)`` solve the inner problem at this ``U``.
    """
    U = state.U_local
    return (U @ V_star.T + S_star - state.M_i) @ V_star + (rho * state.n_i / state.n) * U


def local_round(state, cfg, eta, K):
    """Run `K` local iterations of {inner solve; gradient step on U}.

    Returns a new :class:`ClientState`; the input is left untouched.  ``V_i`` and
    ``S_i`` carry over as warm starts for the next round.
    """
    if eta < 0:
        raise ValueError("eta must be non-negative")
    if K < 1:
        raise ValueError("K must be at least 1")
    cur = dataclasses.replace(state, U_local=state.U_local.copy())
    max_iters = 0
    all_converged = True
    for k in range(K):
        V, S, iters, ok = solve_inner(cur, cfg)
        max_iters = max(max_iters, iters)
        all_converged &= ok
        cur = dataclasses.replace(cur, V_i=V, S_i=S)
        grad = grad_U_at_inner_opt(cur, V, S, cfg.rho)
        if k == 0:
            cur.objective_at_broadcast = inner_minimized_objective(cur, V, S, cfg.rho, cfg.lam)
            cur.grad_at_broadcast = grad
        if eta:
            cur.U_local = cur.U_local - eta * grad
    cur.inner_iters = max_iters
    cur.converged = all_converged
    return cur


def estimate_local_smoothness(state, cfg, iters=30, eps=1e-5, seed=0):
    """Power-iteration estimate of the largest Hessian eigenvalue of ``g_i``.

    Hessian-vector products are central differences of the inner-optimal
    gradient, ``(grad(U + eps d) - grad(U - eps d)) / (2 eps)``.
    """
    rng = np.random.default_rng(seed)
    U = state.U_local
    d = rng.standard_normal(U.shape)
    d /= np.linalg.norm(d)

    def grad_at(Uq):
        probe = dataclasses.replace(state, U_local=Uq)
        V, S, _, _ = solve_inner(probe, cfg)
        return grad_U_at_inner_opt(probe, V, S, cfg.rho)

    est = 0.0
    for _ in range(iters):
        hv = (grad_at(U + eps * d) - grad_at(U - eps * d)) / (2 * eps)
        est = float(np.linalg.norm(hv))
        if est == 0:
            break
        d = hv / est
    return est
