"""Recovery metrics and the experiment drivers built on :func:`consensus.run`."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .consensus import DivergenceError, EtaSchedule, recover, run, write_trace_csv
from .matrix import singular_values_lowrank
from .problem import STREAM_SWEEP, generate, rank_r_svd

__all__ = [
    "EvalReport",
    "SweepResult",
    "relative_error",
    "sv_error",
    "evaluate",
    "phase_sweep",
    "default_sweep_grid",
    "k_ablation",
    "rounds_to_threshold",
    "error_floor",
    "write_sv_report",
    "write_sweep_csv",
    "lowrank_factors_of",
    "SUCCESS_THRESHOLD",
]

SUCCESS_THRESHOLD = 1e-2


@dataclass
class EvalReport:
    rel_error: float | None
    sv_rel_error: float
    sv_recovered: np.ndarray
    sv_truth: np.ndarray
    rank_gap_ratio: float


def relative_error(L, S, truth):
    """``(||L - L0||^2 + ||S - S0||^2) / (||L0||^2 + ||S0||^2)`` in Frobenius norms."""
    if not truth.has_truth:
        raise ValueError("relative_error needs a problem with L0 and S0")
    L = np.asarray(L, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    if L.shape != truth.L0.shape or S.shape != truth.S0.shape:
        raise ValueError(f"shape mismatch: L {L.shape}, S {S.shape}, truth {truth.L0.shape}")
    den = float(np.sum(truth.L0**2) + np.sum(truth.S0**2))
    if den == 0:
        raise ValueError("degenerate truth: L0 and S0 are both zero")
    dl, ds = L - truth.L0, S - truth.S0
    return float((np.sum(dl * dl) + np.sum(ds * ds)) / den)


def _truth_singular_values(truth):
    if truth.U0 is not None and truth.V0 is not None:
        return singular_values_lowrank(truth.U0, truth.V0)
    return rank_r_svd(truth.L0, truth.r)[1]


def sv_error(U, V, truth):
    """Compare the top-r singular values of ``U @ V.T`` with those of ``L0``.

    ``sv_rel_error = max_i |sigma_i(L) - sigma_i(L0)| / sigma_r(L0)`` over
    ``i <= r``; ``rank_gap_ratio = sigma_{r+1}(L) / sigma_r(L)``, zero when the
    factor width equals ``r``.
    """
    r = truth.r
    p = U.shape[1]
    if r > p:
        raise ValueError(f"true rank r = {r} exceeds the factor width p = {p}")
    sv_rec = singular_values_lowrank(U, V)
    sv_true = _truth_singular_values(truth)[:r]
    err = float(np.max(np.abs(sv_rec[:r] - sv_true)) / sv_true[r - 1])
    if p > r:
        gap = float(sv_rec[r] / sv_rec[r - 1]) if sv_rec[r - 1] > 0 else float("inf")
    else:
        gap = 0.0
    return EvalReport(
        rel_error=None, sv_rel_error=err, sv_recovered=sv_rec, sv_truth=sv_true, rank_gap_ratio=gap
    )


def evaluate(server, clients, truth):
    """Full report for a finished run: relative error plus singular-value comparison."""
    L, S = recover(server, clients)
    V = np.vstack([c.V_i for c in clients])
    report = sv_error(server.U, V, truth)
    report.rel_error = relative_error(L, S, truth)
    return report


def write_sv_report(report, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "sigma_recovered", "sigma_truth"])
        for i, rec in enumerate(report.sv_recovered):
            tru = report.sv_truth[i] if i < len(report.sv_truth) else ""
            w.writerow([i + 1, format(float(rec), ".17g"), "" if tru == "" else format(float(tru), ".17g")])


# -- phase sweep -------------------------------------------------------------------

@dataclass
class SweepResult:
    s_grid: list
    r_grid: list
    errors: np.ndarray  # shape (len(r_grid), len(s_grid)); NaN marks a failed cell
    seeds: np.ndarray
    notes: dict = field(default_factory=dict)  # (i_r, i_s) -> failure reason

    def success(self, threshold=SUCCESS_THRESHOLD):
        return self.errors < threshold


def default_sweep_grid(n):
    """Six sparsity levels in [0.05, 0.3] and four ranks in [0.05 n, 0.2 n]."""
    s_grid = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3]
    r_grid = [max(1, round(f * n)) for f in (0.05, 0.1, 0.15, 0.2)]
    return s_grid, r_grid


def _cell_seed(base_seed, i_r, i_s):
    ss = np.random.SeedSequence([int(base_seed), STREAM_SWEEP, i_r, i_s])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def phase_sweep(m, n, s_grid, r_grid, hp, out_csv=None, workers=None):
    """One full run per ``(s, r)`` cell, each on a freshly seeded problem.

    The rank bound is set to the cell's true rank.  A cell whose run fails is
    recorded as NaN with the reason in ``notes``.
    """
    for s in s_grid:
        if not 0 < s < 1:
            raise ValueError(f"sparsity {s} outside (0, 1)")
    for r in r_grid:
        if not 0 < r < min(m, n):
            raise ValueError(f"rank {r} outside (0, min(m, n))")
    errors = np.full((len(r_grid), len(s_grid)), np.nan)
    seeds = np.zeros((len(r_grid), len(s_grid)), dtype=np.int64)
    notes = {}
    for i_r, r in enumerate(r_grid):
        for i_s, s in enumerate(s_grid):
            seed = _cell_seed(hp.seed, i_r, i_s)
            seeds[i_r, i_s] = seed
            try:
                problem = generate(m, n, int(r), float(s), seed)
                server, clients, _ = run(problem, hp.replace(p=int(r), seed=seed), workers=workers)
                L, S = recover(server, clients)
                errors[i_r, i_s] = relative_error(L, S, problem)
            except (DivergenceError, ValueError, FloatingPointError) as exc:
                notes[(i_r, i_s)] = f"{type(exc).__name__}: {exc}"
    result = SweepResult(list(s_grid), list(r_grid), errors, seeds, notes)
    if out_csv is not None:
        write_sweep_csv(result, out_csv)
    return result


def write_sweep_csv(result, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "r", "err", "seed", "note"])
        for i_r, r in enumerate(result.r_grid):
            for i_s, s in enumerate(result.s_grid):
                err = result.errors[i_r, i_s]
                w.writerow(
                    [
                        s,
                        r,
                        "nan" if np.isnan(err) else format(float(err), ".17g"),
                        int(result.seeds[i_r, i_s]),
                        result.notes.get((i_r, i_s), ""),
                    ]
                )


# -- K ablation ---------------------------------------------------------------------

def k_ablation(problem, hp_base, k_values, eta=0.01, E=10, out_dir=None, workers=None):
    """Run identical configurations that differ only in ``K``.

    Every run uses a fixed learning rate `eta`, `E` clients and the seed of
    `hp_base`.  Returns ``{K: RunTrace}``; with `out_dir` each trace is also
    written to ``ablation_K<k>.csv``.
    """
    if any(k < 1 for k in k_values):
        raise ValueError("every K must be at least 1")
    traces = {}
    for k in k_values:
        hp = hp_base.replace(K=int(k), E=E, schedule=EtaSchedule("fixed", eta))
        _, _, trace = run(problem, hp, workers=workers)
        traces[k] = trace
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            write_trace_csv(trace, os.path.join(out_dir, f"ablation_K{k}.csv"))
    return traces


def rounds_to_threshold(trace, threshold):
    """Number of completed rounds before ``rel_error < threshold``; ``None`` if never."""
    for rec in trace:
        if rec.rel_error is not None and rec.rel_error < threshold:
            return rec.round + 1
    return None


def error_floor(trace, window=5):
    """Smallest relative error over the last `window` rounds."""
    errs = [r.rel_error for r in trace.records[-window:] if r.rel_error is not None]
    if not errs:
        raise ValueError("trace carries no relative errors")
    return float(min(errs))


def lowrank_factors_of(server, clients):
    """``(U, V)`` with ``V`` the clients' ``V_i`` stacked in column order."""
    return server.U, np.vstack([c.V_i for c in clients])
