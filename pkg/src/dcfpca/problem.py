"""Synthetic robust-PCA instances, column partitions and incoherence diagnostics."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .matrix import (
    ShapeError,
    lowrank_svd,
    read_coo,
    read_dmat,
    write_coo,
    write_dmat,
)

__all__ = [
    "RpcaProblem",
    "Partition",
    "IncoherenceReport",
    "DegenerateProblemError",
    "make_rng",
    "generate",
    "partition",
    "incoherence_check",
    "rank_r_svd",
    "save_problem",
    "load_problem",
]

# Independent RNG streams derived from one user seed.
STREAM_PROBLEM = 0
STREAM_SERVER_INIT = 1
STREAM_CLIENT_INIT = 2
STREAM_SWEEP = 3


class DegenerateProblemError(ValueError):
    """Raised when the low-rank truth has a vanishing r-th singular value."""


def make_rng(seed, *stream):
    """Philox generator keyed by ``(seed, *stream)``.

    Philox is counter based, so the same key produces the same stream on every
    platform and numpy version that ships it.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *stream])))


@dataclass
class RpcaProblem:
    """Observed matrix ``M = L0 + S0`` together with its ground truth.

    `L0`, `S0` and the generating factors may be ``None`` for problems loaded
    without truth files.
    """

    m: int
    n: int
    r: int
    s: float
    M: np.ndarray
    L0: np.ndarray | None = None
    S0: np.ndarray | None = None
    seed: int | None = None
    U0: np.ndarray | None = field(default=None, repr=False)
    V0: np.ndarray | None = field(default=None, repr=False)

    @property
    def has_truth(self):
        return self.L0 is not None and self.S0 is not None

    def block(self, part, i):
        """Contiguous copy of client `i`'s columns of M."""
        start, end = part.col_ranges[i]
        return np.ascontiguousarray(self.M[:, start:end])


@dataclass(frozen=True)
class Partition:
    client_count: int
    col_ranges: tuple

    @property
    def widths(self):
        return [end - start for start, end in self.col_ranges]


def generate(m, n, r, s, seed):
    """Sample a random RPCA instance.

    ``L0 = U0 @ V0.T`` with i.i.d. standard Gaussian factors of width `r`.
    ``S0`` has exactly ``floor(s*m*n)`` nonzeros, placed uniformly without
    replacement, each equal to ``+-sqrt(m*n)`` with a fair random sign.
    """
    if not (isinstance(m, (int, np.integer)) and isinstance(n, (int, np.integer))):
        raise ValueError("m and n must be integers")
    if m < 1 or n < 1:
        raise ValueError(f"m and n must be positive, got m={m}, n={n}")
    if not 0 < r <= min(m, n):
        raise ValueError(f"rank must satisfy 0 < r <= min(m, n) = {min(m, n)}, got {r}")
    if not 0.0 < s < 1.0:
        raise ValueError(f"sparsity must lie in (0, 1), got {s}")

    rng = make_rng(seed, STREAM_PROBLEM)
    U0 = rng.standard_normal((m, r))
    V0 = rng.standard_normal((n, r))
    L0 = U0 @ V0.T

    cells = m * n
    k = math.floor(s * cells)
    support = _partial_fisher_yates(rng, cells, k)
    signs = rng.integers(0, 2, size=k) * 2.0 - 1.0
    S0 = np.zeros(cells)
    S0[support] = signs * math.sqrt(cells)
    S0 = S0.reshape(m, n)

    return RpcaProblem(
        m=m, n=n, r=r, s=float(s), M=L0 + S0, L0=L0, S0=S0, seed=int(seed), U0=U0, V0=V0
    )


def _partial_fisher_yates(rng, population, k):
    """First `k` positions of a seeded Fisher-Yates shuffle of ``range(population)``."""
    # Only touched positions are materialized.
    swaps = rng.integers(np.arange(k), population) if k else np.zeros(0, dtype=np.int64)
    moved = {}
    out = np.empty(k, dtype=np.int64)
    for i in range(k):
        j = int(swaps[i])
        vi = moved.get(i, i)
        vj = moved.get(j, j)
        out[i] = vj
        moved[j] = vi
    return out


def partition(problem, E):
    """Split the ``n`` columns into `E` contiguous, near-even blocks.

    The first ``n % E`` clients get ``ceil(n/E)`` columns, the rest ``floor(n/E)``.
    """
    n = problem if isinstance(problem, (int, np.integer)) else problem.n
    if not 1 <= E <= n:
        raise ValueError(f"client count must satisfy 1 <= E <= n = {n}, got {E}")
    base, extra = divmod(n, E)
    ranges = []
    start = 0
    for i in range(E):
        width = base + (1 if i < extra else 0)
        ranges.append((start, start + width))
        start += width
    return Partition(client_count=E, col_ranges=tuple(ranges))


def rank_r_svd(L, r):
    """Top-`r` SVD of a matrix known to have rank at most `r`.

    A column-pivoted QR picks an orthonormal basis ``Q`` of the column space,
    after which ``L = Q (Q^T L)`` is handed to the factored SVD.
    """
    L = np.asarray(L, dtype=np.float64)
    if not 0 < r <= min(L.shape):
        raise ShapeError(f"rank {r} out of range for shape {L.shape}")
    q, _, _ = scipy.linalg.qr(L, mode="economic", pivoting=True)
    q = q[:, :r]
    return lowrank_svd(q, L.T @ q)


@dataclass(frozen=True)
class IncoherenceReport:
    max_row_leverage_U: float
    max_row_leverage_V: float
    uv_inf: float
    satisfied: bool
    delta: float
    bounds: tuple


def incoherence_check(problem, delta, rel_slack=1e-12):
    """Check the leverage and ``||U V^T||_inf`` incoherence bounds for ``L0``.

    With ``L0 = U S V^T`` the rank-r SVD, the conditions are::

        max_i ||U^T e_i||^2 <= delta r / m
        max_j ||V^T e_j||^2 <= delta r / n
        ||U V^T||_inf      <= sqrt(delta r / (m n))
    """
    if problem.L0 is None:
        raise ValueError("incoherence_check needs the low-rank truth L0")
    if delta <= 0:
        raise ValueError("delta must be positive")
    m, n, r = problem.m, problem.n, problem.r
    if problem.U0 is not None and problem.V0 is not None:
        left, sig, right = lowrank_svd(problem.U0, problem.V0)
    else:
        left, sig, right = rank_r_svd(problem.L0, r)
    if sig[0] == 0 or sig[r - 1] <= 1e-12 * sig[0]:
        raise DegenerateProblemError(
            f"sigma_r / sigma_1 = {sig[r - 1] / sig[0] if sig[0] else 0.0:.3e}; "
            f"L0 is numerically of rank < {r}"
        )
    left, right = left[:, :r], right[:, :r]
    lev_u = float(np.max(np.sum(left * left, axis=1)))
    lev_v = float(np.max(np.sum(right * right, axis=1)))
    uv_inf = float(np.max(np.abs(left @ right.T)))
    bounds = (delta * r / m, delta * r / n, math.sqrt(delta * r / (m * n)))
    ok = (
        lev_u <= bounds[0] * (1 + rel_slack)
        and lev_v <= bounds[1] * (1 + rel_slack)
        and uv_inf <= bounds[2] * (1 + rel_slack)
    )
    return IncoherenceReport(lev_u, lev_v, uv_inf, ok, float(delta), bounds)


# -- on-disk layout ---------------------------------------------------------------

PROBLEM_FILE = "problem.dmat"
TRUTH_L_FILE = "truth_L.dmat"
TRUTH_S_FILE = "truth_S.coo"
META_FILE = "meta.json"


def save_problem(problem, out_dir):
    """Write ``problem.dmat``, ``truth_L.dmat``, ``truth_S.coo`` and ``meta.json``."""
    os.makedirs(out_dir, exist_ok=True)
    write_dmat(os.path.join(out_dir, PROBLEM_FILE), problem.M)
    if problem.has_truth:
        write_dmat(os.path.join(out_dir, TRUTH_L_FILE), problem.L0)
        write_coo(os.path.join(out_dir, TRUTH_S_FILE), problem.S0)
    meta = {"m": problem.m, "n": problem.n, "r": problem.r, "s": problem.s, "seed": problem.seed}
    with open(os.path.join(out_dir, META_FILE), "w", encoding="ascii") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_problem(in_dir):
    with open(os.path.join(in_dir, META_FILE), encoding="ascii") as fh:
        meta = json.load(fh)
    M = read_dmat(os.path.join(in_dir, PROBLEM_FILE))
    if M.shape != (meta["m"], meta["n"]):
        raise ValueError(f"{in_dir}: problem.dmat shape {M.shape} disagrees with meta.json")
    L0 = S0 = None
    l_path = os.path.join(in_dir, TRUTH_L_FILE)
    s_path = os.path.join(in_dir, TRUTH_S_FILE)
    if os.path.exists(l_path) and os.path.exists(s_path):
        L0 = read_dmat(l_path)
        S0 = read_coo(s_path, M.shape)
    return RpcaProblem(
        m=meta["m"], n=meta["n"], r=meta["r"], s=meta["s"], M=M, L0=L0, S0=S0, seed=meta.get("seed")
    )
