"""Round-synchronous simulator of the consensus-factorization RPCA protocol.

Each round the server broadcasts ``U``; every client runs ``K`` local
iterations on its own column block and returns its updated ``U_i``; the server
replaces ``U`` by the plain average.  Only ``m x p`` matrices ever cross the
client/server boundary, and every such message is metered.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .local import ClientState, InnerSolveConfig, local_round
from .matrix import ShapeError
from .problem import STREAM_CLIENT_INIT, STREAM_SERVER_INIT, make_rng, partition

__all__ = [
    "BYTES_PER_ENTRY",
    "DivergenceError",
    "RoundMismatchError",
    "EtaSchedule",
    "Hyperparams",
    "ServerState",
    "Message",
    "RoundRecord",
    "RunTrace",
    "init_server",
    "aggregate",
    "run",
    "recover",
    "validate_hyperparams",
    "comm_cost",
    "default_workers",
    "write_trace_csv",
    "read_trace_csv",
    "TRACE_HEADER",
]

BYTES_PER_ENTRY = 8
TRACE_HEADER = ["round", "eta", "objective", "grad_norm", "rel_error", "inner_iters", "bytes", "wall_ms"]
NECESSARY_CONDITION_WARNING = "necessary-condition violated"


class DivergenceError(RuntimeError):
    def __init__(self, round_, client, detail="non-finite entries"):
        super().__init__(f"divergence in round {round_} at client {client}: {detail}")
        self.round = round_
        self.client = client


class RoundMismatchError(RuntimeError):
    """A client reply carried a round tag other than the server's current round."""


@dataclass(frozen=True)
class EtaSchedule:
    """Learning-rate schedule.

    ``kind`` is one of

    * ``"fixed"``: ``eta = value`` every round;
    * ``"sqrt"``: ``eta = value / sqrt(t + 1)`` in round ``t``;
    * ``"kt"``: ``eta = value / sqrt(K T)``, constant across the run.
    """

    kind: str = "sqrt"
    value: float = 0.05

    KINDS = ("fixed", "sqrt", "kt")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown schedule {self.kind!r}; expected one of {self.KINDS}")
        if self.value < 0:
            raise ValueError("learning rate must be non-negative")

    def eta(self, t, K, T):
        if self.kind == "fixed":
            return self.value
        if self.kind == "sqrt":
            return self.value / math.sqrt(t + 1)
        return self.value / math.sqrt(K * T)


@dataclass(frozen=True)
class Hyperparams:
    """Everything a run needs besides the data.

    ``lam`` defaults to 1 (unit Huber threshold) and ``rho`` to 1; with these
    the necessary condition ``rho^2 <= lam^2 m n`` holds for every problem
    size.  ``init_scale=None`` draws ``U0`` entries from ``N(0, 1/p)``.
    """

    p: int = 10
    E: int = 10
    K: int = 2
    T: int = 50
    rho: float = 1.0
    lam: float = 1.0
    schedule: EtaSchedule = field(default_factory=EtaSchedule)
    inner_tol: float = 1e-8
    inner_max_iters: int = 500
    inner_step: float | str = "auto"
    warm_start: bool = True
    init_scale: float | None = None
    seed: int = 0
    record_time: bool = True

    def __post_init__(self):
        for name in ("p", "E", "K", "T"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.rho <= 0 or self.lam <= 0:
            raise ValueError("rho and lam must be positive")
        if self.init_scale is not None and self.init_scale <= 0:
            raise ValueError("init_scale must be positive")
        self.inner_config()  # validates the inner settings too

    def inner_config(self):
        return InnerSolveConfig(
            rho=self.rho,
            lam=self.lam,
            tol=self.inner_tol,
            max_iters=self.inner_max_iters,
            step_size=self.inner_step,
            warm_start=self.warm_start,
        )

    def eta(self, t):
        return self.schedule.eta(t, self.K, self.T)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["schedule"] = self.schedule.kind
        d["eta"] = self.schedule.value
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("schedule", "sqrt")
        value = d.pop("eta", 0.05)
        if isinstance(kind, dict):
            kind, value = kind["kind"], kind["value"]
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown hyperparameter fields: {sorted(unknown)}")
        return cls(schedule=EtaSchedule(kind, float(value)), **d)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class Message:
    """One metered transfer across the client/server boundary."""

    round: int
    direction: str  # "broadcast" or "reply"
    client: int
    shape: tuple
    nbytes: int


@dataclass
class ServerState:
    U: np.ndarray
    round: int = 0
    bytes_sent: int = 0
    bytes_received: int = 0
    log: list = field(default_factory=list, repr=False)

    def _meter(self, direction, client, payload):
        nbytes = payload.size * BYTES_PER_ENTRY
        self.log.append(Message(self.round, direction, client, payload.shape, nbytes))
        if direction == "broadcast":
            self.bytes_sent += nbytes
        else:
            self.bytes_received += nbytes
        return nbytes


@dataclass(frozen=True)
class RoundRecord:
    round: int
    eta: float
    global_objective: float
    grad_norm_estimate: float
    rel_error: float | None
    max_client_inner_iters: int
    bytes_this_round: int
    wall_ms: float


@dataclass
class RunTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def rel_errors(self):
        return self.column("rel_error")

    @property
    def grad_norms(self):
        return self.column("grad_norm_estimate")


def init_server(m, p, seed, scale=None):
    """Server state with ``U0`` drawn i.i.d. from ``N(0, scale^2)``, default ``scale = 1/sqrt(p)``."""
    rng = make_rng(seed, STREAM_SERVER_INIT)
    scale = 1.0 / math.sqrt(p) if scale is None else scale
    return ServerState(U=rng.standard_normal((m, p)) * scale)


def aggregate(u_list):
    """Entrywise mean of the client copies.

    Computed as ``U_0 + mean_i(U_i - U_0)`` with the sum taken in list order:
    bit-reproducible, and exact when every client returns the same matrix.
    """
    if not u_list:
        raise ValueError("nothing to aggregate")
    base = u_list[0]
    shape = base.shape
    total = np.zeros(shape)
    for i, u in enumerate(u_list):
        if u.shape != shape:
            raise ShapeError(f"client {i} returned shape {u.shape}, expected {shape}")
        total += u - base
    return base + total / len(u_list)


def comm_cost(hp, m):
    """Bytes moved per round: one ``m x p`` broadcast and one reply per client."""
    return 2 * hp.E * m * hp.p * BYTES_PER_ENTRY


def validate_hyperparams(hp, m, n, smoothness=None):
    """Human-readable warnings for settings that cannot reach a global optimum.

    Flags ``rho^2 > lam^2 m n`` and, when a measured `smoothness` constant is
    given, a fixed learning rate at or above ``1 / smoothness``.
    """
    warnings = []
    if hp.rho**2 > hp.lam**2 * m * n:
        warnings.append(
            f"{NECESSARY_CONDITION_WARNING}: rho^2 = {hp.rho**2:.6g} > lam^2 m n = {hp.lam**2 * m * n:.6g}; "
            "a global optimum is unreachable"
        )
    if smoothness is not None and smoothness > 0:
        eta = hp.eta(0)  # largest rate of every schedule
        if eta >= 1.0 / smoothness:
            warnings.append(
                f"learning rate {eta:.6g} >= 1/L = {1.0 / smoothness:.6g} "
                f"(measured smoothness L = {smoothness:.6g}); convergence is not guaranteed"
            )
    return warnings


def default_workers():
    try:
        return max(1, int(os.environ.get("DCFPCA_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class _Broadcast:
    round: int
    U: np.ndarray


@dataclass(frozen=True)
class _Reply:
    round: int
    client: int
    U: np.ndarray


def _client_task(state, bcast, cfg, eta, K):
    local = dataclasses.replace(state, U_local=bcast.U.copy())
    # overflow is reported as a divergence by the server, not as a warning here
    with np.errstate(over="ignore", invalid="ignore"):
        new = local_round(local, cfg, eta, K)
    return new, _Reply(bcast.round, state.id, new.U_local)


def _init_clients(problem, hp, U0):
    part = partition(problem, hp.E)
    clients = []
    for i in range(hp.E):
        M_i = problem.block(part, i)
        n_i = M_i.shape[1]
        rng = make_rng(hp.seed, STREAM_CLIENT_INIT, i)
        V_i = rng.standard_normal((n_i, hp.p)) / math.sqrt(hp.p)
        # S_i is a function of (U, V_i) after the first inner solve; its start value is unused.
        S_i = np.zeros_like(M_i)
        clients.append(ClientState(id=i, M_i=M_i, U_local=U0.copy(), V_i=V_i, S_i=S_i, n=problem.n))
    return clients


def recover(server, clients):
    """Stack the clients' blocks into full ``(L, S)`` with ``L_i = U V_i^T``."""
    L = np.hstack([server.U @ c.V_i.T for c in clients])
    S = np.hstack([c.S_i for c in clients])
    return L, S


def _relative_error(L, S, problem):
    dl, ds = L - problem.L0, S - problem.S0
    den = float(np.sum(problem.L0**2) + np.sum(problem.S0**2))
    return float((np.sum(dl * dl) + np.sum(ds * ds)) / den)


def run(problem, hp, workers=None, on_round=None):
    """Simulate ``hp.T`` rounds of the protocol on `problem`.

    Parameters
    ----------
    problem : RpcaProblem
    hp : Hyperparams
    workers : int, optional
        Thread-pool size for the client tasks; defaults to ``DCFPCA_WORKERS``
        or 1.  Results do not depend on it.
    on_round : callable, optional
        Called as ``on_round(record, server)`` after every round; `server`
        holds the freshly aggregated ``U`` and must not be modified.

    Returns
    -------
    server : ServerState
    clients : list of ClientState
    trace : RunTrace
        One record per round.  ``global_objective`` and ``grad_norm_estimate``
        are ``g(U^(t))`` and ``||grad g(U^(t))||_F`` at the broadcast iterate,
        assembled from the clients' first local iteration.  ``rel_error`` is
        measured on the recovery after aggregation (``None`` without truth).
    """
    if hp.E > problem.n:
        raise ValueError(f"E = {hp.E} exceeds the column count n = {problem.n}")
    if hp.p > min(problem.m, problem.n):
        raise ValueError(f"rank bound p = {hp.p} exceeds min(m, n)")
    workers = default_workers() if workers is None else max(1, int(workers))
    cfg = hp.inner_config()
    m = problem.m

    server = init_server(m, hp.p, hp.seed, hp.init_scale)
    clients = _init_clients(problem, hp, server.U)
    trace = RunTrace()
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for t in range(hp.T):
            start = time.perf_counter()
            server.round = t
            eta = hp.eta(t)
            payload = server.U.copy()
            payload.flags.writeable = False
            bcast = _Broadcast(t, payload)
            bytes_before = server.bytes_sent + server.bytes_received
            for c in clients:
                server._meter("broadcast", c.id, payload)

            tasks = [(c, bcast, cfg, eta, hp.K) for c in clients]
            if pool is None:
                results = [_client_task(*a) for a in tasks]
            else:
                results = list(pool.map(lambda a: _client_task(*a), tasks))

            replies = []
            for new_state, reply in results:
                if reply.round != t:
                    raise RoundMismatchError(
                        f"client {reply.client} replied for round {reply.round} during round {t}"
                    )
                if not np.all(np.isfinite(reply.U)):
                    raise DivergenceError(t, reply.client)
                server._meter("reply", reply.client, reply.U)
                replies.append(reply.U)
            clients = [s for s, _ in results]
            server.U = aggregate(replies)
            if not np.all(np.isfinite(server.U)):
                raise DivergenceError(t, "server", "aggregate is non-finite")

            objective = sum(c.objective_at_broadcast for c in clients)
            grad = np.zeros_like(server.U)
            for c in clients:
                grad += c.grad_at_broadcast
            rel = None
            if problem.has_truth:
                with np.errstate(over="ignore"):
                    L, S = recover(server, clients)
                    rel = _relative_error(L, S, problem)
            wall = (time.perf_counter() - start) * 1e3 if hp.record_time else 0.0
            record = RoundRecord(
                round=t,
                eta=eta,
                global_objective=float(objective),
                grad_norm_estimate=float(np.linalg.norm(grad)),
                rel_error=rel,
                max_client_inner_iters=max(c.inner_iters for c in clients),
                bytes_this_round=server.bytes_sent + server.bytes_received - bytes_before,
                wall_ms=wall,
            )
            trace.records.append(record)
            if on_round is not None:
                on_round(record, server)
        server.round = hp.T
    finally:
        if pool is not None:
            pool.shutdown()
    return server, clients, trace


# -- trace files ------------------------------------------------------------------

def _cell(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def write_trace_csv(trace, path, comments=None):
    """Write the trace as CSV, optionally preceded by ``# key=value`` comment lines."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, value in (comments or {}).items():
            fh.write(f"# {key}={value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in trace:
            w.writerow(
                [
                    r.round,
                    _cell(r.eta),
                    _cell(r.global_objective),
                    _cell(r.grad_norm_estimate),
                    _cell(r.rel_error),
                    r.max_client_inner_iters,
                    r.bytes_this_round,
                    _cell(r.wall_ms),
                ]
            )


def read_trace_csv(path):
    with open(path, encoding="utf-8") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(rows)
    trace = RunTrace()
    for row in reader:
        trace.records.append(
            RoundRecord(
                round=int(row["round"]),
                eta=float(row["eta"]),
                global_objective=float(row["objective"]),
                grad_norm_estimate=float(row["grad_norm"]),
                rel_error=float(row["rel_error"]) if row["rel_error"] else None,
                max_client_inner_iters=int(row["inner_iters"]),
                bytes_this_round=int(row["bytes"]),
                wall_ms=float(row["wall_ms"]),
            )
        )
    return trace
