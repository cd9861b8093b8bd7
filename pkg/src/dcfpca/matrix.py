"""Dense matrix helpers shared by the solver, the simulator and the evaluation code.

Matrices are plain C-contiguous ``float64`` numpy arrays.  This module adds the
few decompositions the rest of the package needs on top of them: a one-sided
Jacobi SVD for small cores, singular values of a factored product ``U @ V.T``
and the nuclear norm, plus the ``DMAT v1`` and coordinate-list text formats.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "ShapeError",
    "SizeLimitError",
    "as_matrix",
    "matmul",
    "frobenius_norm",
    "l1_norm",
    "jacobi_svd",
    "lowrank_svd",
    "singular_values_lowrank",
    "nuclear_norm_small",
    "write_dmat",
    "read_dmat",
    "write_coo",
    "read_coo",
]

NUCLEAR_NORM_MAX_DIM = 500


class ShapeError(ValueError):
    """Raised when operands have incompatible shapes."""


class SizeLimitError(ValueError):
    """Raised when an oracle-scale routine is handed an oversized input."""


def as_matrix(a, name="matrix"):
    """Return `a` as a C-contiguous 2-D float64 array, rejecting NaN/Inf."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def matmul(a, b):
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def frobenius_norm(a):
    a = np.asarray(a, dtype=np.float64)
    return float(np.sqrt(np.sum(a * a)))


def l1_norm(a):
    """Entrywise l1 norm, i.e. the sum of absolute values."""
    return float(np.sum(np.abs(np.asarray(a, dtype=np.float64))))


def _round_robin(k):
    """Yield (left, right) index arrays covering every column pair once.

    Tournament ordering: each of the ``k - 1`` rounds holds ``k // 2`` disjoint
    pairs, so one round can be rotated in a single vectorized step.
    """
    idx = list(range(k))
    if k % 2:
        idx.append(-1)  # bye
    size = len(idx)
    half = size // 2
    for _ in range(size - 1):
        left = np.array(idx[:half])
        right = np.array(idx[half:][::-1])
        keep = (left >= 0) & (right >= 0)
        yield left[keep], right[keep]
        idx = [idx[0]] + [idx[-1]] + idx[1:-1]


def jacobi_svd(a, tol=1e-15, max_sweeps=80):
    """Thin SVD by one-sided (Hestenes) Jacobi rotations.

    Parameters
    ----------
    a : (m, n) array_like
    tol : float
        A column pair counts as orthogonal once
        ``|a_i . a_j| <= tol * ||a_i|| ||a_j||``.
    max_sweeps : int
        Upper bound on full passes over all column pairs.

    Returns
    -------
    u : (m, k) ndarray
    s : (k,) ndarray
        Singular values in descending order, ``k = min(m, n)``.
    v : (n, k) ndarray
        ``a = u @ diag(s) @ v.T``.  Columns of `u` belonging to zero singular
        values are zero rather than completed to an orthonormal basis.
    """
    a = np.array(a, dtype=np.float64, copy=True)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D array, got shape {a.shape}")
    m, n = a.shape
    if m < n:
        v, s, u = jacobi_svd(a.T, tol=tol, max_sweeps=max_sweeps)
        return u, s, v
    if n == 0:
        return np.zeros((m, 0)), np.zeros(0), np.zeros((0, 0))

    work = a
    vec = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for left, right in _round_robin(n):
            if left.size == 0:
                continue
            ai, aj = work[:, left], work[:, right]
            alpha = np.einsum("ij,ij->j", ai, ai)
            beta = np.einsum("ij,ij->j", aj, aj)
            gamma = np.einsum("ij,ij->j", ai, aj)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not np.any(active):
                continue
            rotated = True
            g = np.where(active, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.hypot(1.0, t)
            sn = c * t
            c = np.where(active, c, 1.0)
            sn = np.where(active, sn, 0.0)
            work[:, left], work[:, right] = c * ai - sn * aj, sn * ai + c * aj
            vi, vj = vec[:, left], vec[:, right]
            vec[:, left], vec[:, right] = c * vi - sn * vj, sn * vi + c * vj
        if not rotated:
            break

    s = np.sqrt(np.einsum("ij,ij->j", work, work))
    order = np.argsort(-s, kind="stable")
    s = s[order]
    work = work[:, order]
    vec = vec[:, order]
    u = np.zeros_like(work)
    nz = s > 0
    u[:, nz] = work[:, nz] / s[nz]
    return u, s, vec


def lowrank_svd(u, v):
    """SVD of the product ``u @ v.T`` without forming it.

    Both factors are QR-factored and only the ``p x p`` core ``Ru @ Rv.T`` is
    decomposed, so the cost is ``O((m + n) p^2 + p^3)``.

    Returns
    -------
    left : (m, p) ndarray
    s : (p,) ndarray, descending
    right : (n, p) ndarray
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 2 or v.ndim != 2 or u.shape[1] != v.shape[1]:
        raise ShapeError(f"factor widths differ: {u.shape} vs {v.shape}")
    p = u.shape[1]
    if p > min(u.shape[0], v.shape[0]):
        raise ShapeError(
            f"factor width {p} exceeds min(m, n) = {min(u.shape[0], v.shape[0])}"
        )
    qu, ru = np.linalg.qr(u)
    qv, rv = np.linalg.qr(v)
    a, s, b = jacobi_svd(ru @ rv.T)
    return qu @ a, s, qv @ b


def singular_values_lowrank(u, v):
    """The ``p`` singular values of ``u @ v.T`` in descending order."""
    return lowrank_svd(u, v)[1]


def nuclear_norm_small(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D array, got shape {a.shape}")
    if min(a.shape) > NUCLEAR_NORM_MAX_DIM:
        raise SizeLimitError(
            f"nuclear_norm_small is limited to min(m, n) <= {NUCLEAR_NORM_MAX_DIM}, "
            f"got {a.shape}"
        )
    return float(np.sum(jacobi_svd(a)[1]))


# -- text formats ---------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def write_dmat(path, a):
    """Write `a` in ``DMAT v1``: a ``m n`` line, then one line per row."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"DMAT holds 2-D arrays, got shape {a.shape}")
    m, n = a.shape
    lines = [f"{m} {n}"]
    lines.extend(" ".join(_fmt(x) for x in row) for row in a)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_dmat(path):
    with open(path, encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: malformed DMAT header")
        m, n = int(header[0]), int(header[1])
        rows = [line.split() for line in fh if line.strip()]
    if len(rows) != m or any(len(r) != n for r in rows):
        raise ValueError(f"{path}: expected {m} rows of {n} values")
    out = np.array([[float(x) for x in r] for r in rows], dtype=np.float64)
    return out.reshape(m, n)


def write_coo(path, a):
    """Write the nonzeros of `a` as ``i j value`` lines (0-based, row-major order)."""
    a = np.asarray(a, dtype=np.float64)
    ii, jj = np.nonzero(a)
    with open(path, "w", encoding="ascii") as fh:
        for i, j in zip(ii, jj):
            fh.write(f"{i} {j} {_fmt(a[i, j])}\n")


def read_coo(path, shape):
    out = np.zeros(shape, dtype=np.float64)
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'i j value'")
            out[int(parts[0]), int(parts[1])] = float(parts[2])
    return out


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
