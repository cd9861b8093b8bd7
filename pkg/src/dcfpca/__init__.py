"""Distributed robust PCA by consensus factorization.

The observed matrix ``M = L0 + S0`` (low rank plus sparse) is split by columns
across clients.  All clients share one left factor ``U``; each keeps its own
right factor ``V_i`` and sparse part ``S_i`` private.  Rounds follow the
federated-averaging pattern: broadcast ``U``, take ``K`` local gradient steps
on the inner-minimized objective, average.
"""

from .consensus import (
    DivergenceError,
    EtaSchedule,
    Hyperparams,
    RunTrace,
    ServerState,
    aggregate,
    comm_cost,
    init_server,
    recover,
    run,
    validate_hyperparams,
)
from .evaluation import (
    EvalReport,
    evaluate,
    k_ablation,
    phase_sweep,
    relative_error,
    sv_error,
)
from .local import (
    ClientState,
    InnerSolveConfig,
    grad_U_at_inner_opt,
    h_value_and_grad,
    huber,
    local_objective,
    local_round,
    soft_threshold,
    solve_inner,
)
from .matrix import (
    frobenius_norm,
    l1_norm,
    matmul,
    nuclear_norm_small,
    singular_values_lowrank,
)
from .problem import Partition, RpcaProblem, generate, incoherence_check, partition

__version__ = "0.1.0"
