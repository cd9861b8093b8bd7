"""Reference computations that share no code with the package.

Each oracle solves its problem by a different route than the library: Newton
instead of gradient descent, alternating exact minimization, LAPACK SVD, brute
force grids and plain Python loops.
"""

import numpy as np


def huber_scalar(x, lam):
    ax = abs(x)
    if ax <= lam:
        return 0.5 * x * x
    return lam * ax - 0.5 * lam * lam


def h_loop(V, U, M, rho, lam):
    """``rho/2 ||V||^2 + sum_ij H(M_ij - u_i . v_j)`` with explicit loops."""
    total = 0.5 * rho * float(np.sum(V * V))
    m, n = M.shape
    for i in range(m):
        for j in range(n):
            total += huber_scalar(M[i, j] - float(U[i] @ V[j]), lam)
    return total


def inner_newton(U, M, rho, lam, tol=1e-14, max_iters=100):
    """Exact inner minimizer by damped semismooth Newton.

    ``h`` separates over the rows ``v_j`` of V; each piece is a piecewise
    quadratic in ``p`` variables, so Newton with the generalized Hessian
    ``rho I + U^T D_j U`` (``D_j`` marking the quadratic Huber branch) and an
    Armijo backtrack terminates.  All rows are iterated together.
    """
    m, n = M.shape
    p = U.shape[1]
    V = np.zeros((n, p))
    eye = np.eye(p)

    def row_values(W):
        R = M - U @ W.T
        a = np.abs(R)
        hub = np.where(a <= lam, 0.5 * R * R, lam * a - 0.5 * lam * lam)
        return 0.5 * rho * np.sum(W * W, axis=1) + hub.sum(axis=0)

    for _ in range(max_iters):
        R = M - U @ V.T
        G = rho * V - np.clip(R, -lam, lam).T @ U
        gn = np.linalg.norm(G, axis=1)
        todo = gn > tol * np.maximum(1.0, np.linalg.norm(V, axis=1))
        if not np.any(todo):
            break
        D = (np.abs(R) < lam).astype(float)
        H = rho * eye + np.einsum("ij,ik,il->jkl", D, U, U)
        step = -np.linalg.solve(H, G[:, :, None])[:, :, 0]
        step[~todo] = 0.0
        f0 = row_values(V)
        slope = np.sum(G * step, axis=1)
        t = np.ones(n)
        for _ in range(60):
            bad = row_values(V + t[:, None] * step) > f0 + 1e-4 * t * slope
            if not np.any(bad):
                break
            t[bad] *= 0.5
        V = V + t[:, None] * step
    S = soft_threshold_loop(M - U @ V.T, lam)
    return V, S


def inner_altmin(U, M, rho, lam, stall=1e-10, max_iters=200000):
    """Alternate the exact ridge solve for V with soft thresholding for S."""
    p = U.shape[1]
    gram_inv = np.linalg.inv(U.T @ U + rho * np.eye(p))
    S = np.zeros_like(M)
    prev = np.inf
    for _ in range(max_iters):
        V = (M - S).T @ U @ gram_inv
        R = M - U @ V.T
        S = np.sign(R) * np.maximum(np.abs(R) - lam, 0.0)
        obj = full_objective(U, V, S, M, rho, lam)
        if prev - obj <= stall * max(1.0, abs(obj)):
            break
        prev = obj
    return V, S, obj


def full_objective(U, V, S, M, rho, lam, reg_u=0.0):
    R = U @ V.T + S - M
    return (
        0.5 * float(np.sum(R * R))
        + 0.5 * rho * float(np.sum(V * V))
        + lam * float(np.sum(np.abs(S)))
        + 0.5 * reg_u * float(np.sum(U * U))
    )


def soft_threshold_loop(R, lam):
    out = np.zeros_like(R)
    for idx, x in np.ndenumerate(R):
        if x > lam:
            out[idx] = x - lam
        elif x < -lam:
            out[idx] = x + lam
    return out


def prox_grid(r, lam, resolution=1e-4):
    """argmin_s 1/2 (r - s)^2 + lam |s| by brute force over a grid."""
    half = abs(r) + 1.0
    grid = np.arange(-half, half + resolution, resolution)
    vals = 0.5 * (r - grid) ** 2 + lam * np.abs(grid)
    return float(grid[np.argmin(vals)])


def g_value(U, M, rho, lam, n_total):
    """``min_{V,S} L_i`` at U, from the Newton oracle."""
    V, S = inner_newton(U, M, rho, lam)
    return full_objective(U, V, S, M, rho, lam, reg_u=rho * M.shape[1] / n_total)


def fd_gradient(f, X, eps=1e-6):
    """Central finite differences of a scalar function of a matrix."""
    G = np.zeros_like(X)
    for idx in np.ndindex(*X.shape):
        E = np.zeros_like(X)
        E[idx] = eps
        G[idx] = (f(X + E) - f(X - E)) / (2 * eps)
    return G


def centralized_gd(M, U0, rho, lam, etas):
    """Gradient descent on ``g(U) = min_{V,S} L(U, V, S)`` over the full matrix.

    Returns the list of iterates ``[U1, U2, ...]``.
    """
    U = U0.copy()
    out = []
    for eta in etas:
        V, S = inner_newton(U, M, rho, lam)
        grad = (U @ V.T + S - M) @ V + rho * U
        U = U - eta * grad
        out.append(U.copy())
    return out


def mean_loop(mats):
    shape = mats[0].shape
    out = np.zeros(shape)
    for idx in np.ndindex(*shape):
        s = 0.0
        for A in mats:
            s += A[idx]
        out[idx] = s / len(mats)
    return out


def singular_values(A):
    return np.linalg.svd(A, compute_uv=False)
