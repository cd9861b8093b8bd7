"""``dcfpca`` command line: generate, run, eval, sweep, ablate, validate.

Exit codes: 0 success, 2 usage or I/O error, 3 divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys

import numpy as np

from . import consensus, evaluation, problem as problem_mod
from .consensus import DivergenceError, EtaSchedule, Hyperparams
from .matrix import read_coo, read_dmat, write_dmat

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 3

SCHEDULE_ALIASES = {"fixed": "fixed", "sqrt": "sqrt", "sqrt_decay": "sqrt", "kt": "kt", "kt_fixed": "kt"}


class CliError(Exception):
    """Usage or I/O problem; reported on stderr with exit code 2."""


def _fraction(text):
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < x < 1.0:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {x}")
    return x


def _positive_int(text):
    try:
        x = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if x < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {x}")
    return x


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_problem_flags(p, with_dir=True):
    if with_dir:
        p.add_argument("--problem", metavar="DIR", help="directory written by 'generate'")
    p.add_argument("--m", type=_positive_int, help="rows (inline generation)")
    p.add_argument("--n", type=_positive_int, help="columns (inline generation)")
    p.add_argument("--rank", type=_positive_int, help="true rank r (inline generation)")
    p.add_argument("--sparsity", type=_fraction, help="fraction of corrupted entries (inline generation)")


def _add_hp_flags(p):
    g = p.add_argument_group("hyperparameters (override --config)")
    g.add_argument("--config", metavar="FILE", help="JSON file with hyperparameter fields")
    g.add_argument("--rho", type=float)
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--p", type=_positive_int, help="rank bound (defaults to the true rank)")
    g.add_argument("--clients", dest="E", type=_positive_int)
    g.add_argument("--K", type=_positive_int, help="local iterations per round")
    g.add_argument("--T", type=int, help="number of rounds")
    g.add_argument("--eta0", type=float, help="learning-rate constant of the schedule")
    g.add_argument("--schedule", choices=sorted(SCHEDULE_ALIASES))
    g.add_argument("--inner-tol", dest="inner_tol", type=float)
    g.add_argument("--inner-max-iters", dest="inner_max_iters", type=_positive_int)
    g.add_argument("--init-scale", dest="init_scale", type=float)
    g.add_argument("--cold-start", dest="warm_start", action="store_false", default=None,
                   help="restart every inner solve from V = 0")
    g.add_argument("--no-timing", dest="record_time", action="store_false", default=None,
                   help="record wall_ms as 0 so traces are byte-reproducible")


def _add_common(p):
    p.add_argument("--seed", type=int, help="master seed; drawn from entropy and printed when absent")
    p.add_argument("--workers", type=_positive_int, default=consensus.default_workers(),
                   help="client thread-pool size (default: $DCFPCA_WORKERS or 1)")


def build_parser():
    parser = argparse.ArgumentParser(prog="dcfpca", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("generate", help="write a synthetic problem to disk")
    p.add_argument("--m", type=_positive_int, default=200)
    p.add_argument("--n", type=_positive_int, default=200)
    p.add_argument("--rank", type=_positive_int, default=10)
    p.add_argument("--sparsity", type=_fraction, default=0.05)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("run", help="simulate the consensus protocol")
    _add_problem_flags(p)
    _add_hp_flags(p)
    _add_common(p)
    p.add_argument("--out", metavar="DIR", default="dcfpca_out")

    p = sub.add_parser("eval", help="score a recovery against the truth")
    p.add_argument("--problem", metavar="DIR", required=True)
    p.add_argument("--factors", metavar="DIR",
                   help="directory with U_final.dmat, V_final.dmat, S_final.dmat")
    p.add_argument("--U", metavar="FILE")
    p.add_argument("--V", metavar="FILE")
    p.add_argument("--L", metavar="FILE", help="dense low-rank estimate, instead of --U/--V")
    p.add_argument("--S", metavar="FILE", help=".dmat or .coo")
    p.add_argument("--out", metavar="DIR")

    p = sub.add_parser("sweep", help="sparsity/rank phase sweep")
    p.add_argument("--m", type=_positive_int, default=100)
    p.add_argument("--n", type=_positive_int, default=100)
    p.add_argument("--s-grid", type=_float_list, default=None, help="e.g. 0.05,0.1,0.3")
    p.add_argument("--r-grid", type=_float_list, default=None,
                   help="ranks as fractions of n, e.g. 0.05,0.2")
    _add_hp_flags(p)
    _add_common(p)
    p.add_argument("--out", metavar="DIR", default="dcfpca_sweep")

    p = sub.add_parser("ablate", help="compare runs that differ only in K")
    _add_problem_flags(p)
    _add_hp_flags(p)
    _add_common(p)
    p.add_argument("--k-values", type=_int_list, default=[1, 10])
    p.add_argument("--eta", type=float, default=0.01, help="fixed learning rate")
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--out", metavar="DIR", default="dcfpca_ablation")

    p = sub.add_parser("validate", help="check hyperparameters against the necessary condition")
    p.add_argument("--m", type=_positive_int, required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    _add_hp_flags(p)
    p.add_argument("--smoothness", type=float, help="measured smoothness constant L")
    return parser


# -- helpers ------------------------------------------------------------------------

def _resolve_seed(args):
    if args.seed is None:
        args.seed = secrets.randbits(63)
        print(f"seed={args.seed}")
    return args.seed


def _hyperparams(args, default_p=None):
    """Defaults < config file < explicit flags."""
    fields = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                fields.update(json.load(fh))
        except OSError as exc:
            raise CliError(f"cannot read config {args.config}: {exc}") from exc
    for name in ("rho", "lam", "p", "E", "K", "T", "inner_tol", "inner_max_iters",
                 "init_scale", "warm_start", "record_time"):
        value = getattr(args, name, None)
        if value is not None:
            fields[name] = value
    if getattr(args, "schedule", None) is not None:
        fields["schedule"] = SCHEDULE_ALIASES[args.schedule]
    if getattr(args, "eta0", None) is not None:
        fields["eta"] = args.eta0
    if getattr(args, "seed", None) is not None:
        fields["seed"] = args.seed
    if "p" not in fields and default_p is not None:
        fields["p"] = default_p
    try:
        return Hyperparams.from_dict(fields)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid hyperparameters: {exc}") from exc


def _load_or_generate(args):
    if args.problem:
        try:
            return problem_mod.load_problem(args.problem)
        except (OSError, KeyError, ValueError) as exc:
            raise CliError(f"cannot load problem from {args.problem}: {exc}") from exc
    missing = [f for f in ("m", "n", "rank", "sparsity") if getattr(args, f) is None]
    if missing:
        raise CliError("either --problem or all of --m --n --rank --sparsity are required "
                       f"(missing: {', '.join('--' + f for f in missing)})")
    try:
        return problem_mod.generate(args.m, args.n, args.rank, args.sparsity, args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _makedirs(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {path}: {exc}") from exc


def _print_warnings(warnings):
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)


# -- subcommands --------------------------------------------------------------------

def cmd_generate(args):
    seed = _resolve_seed(args)
    try:
        prob = problem_mod.generate(args.m, args.n, args.rank, args.sparsity, seed)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    try:
        problem_mod.save_problem(prob, args.out)
    except OSError as exc:
        raise CliError(f"cannot write to {args.out}: {exc}") from exc
    nnz = int(np.count_nonzero(prob.S0))
    print(f"wrote {args.out}: m={prob.m} n={prob.n} r={prob.r} s={prob.s} nnz(S0)={nnz} seed={seed}")
    return EXIT_OK


def cmd_run(args):
    _resolve_seed(args)
    prob = _load_or_generate(args)
    hp = _hyperparams(args, default_p=prob.r)
    _print_warnings(consensus.validate_hyperparams(hp, prob.m, prob.n))
    _makedirs(args.out)

    init = consensus.init_server(prob.m, hp.p, hp.seed, hp.init_scale)
    try:
        server, clients, trace = consensus.run(prob, hp, workers=args.workers)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    comments = {k: v for k, v in sorted(hp.to_dict().items())}
    comments.update({"m": prob.m, "n": prob.n, "r": prob.r, "s": prob.s})
    try:
        consensus.write_trace_csv(trace, os.path.join(args.out, "trace.csv"), comments=comments)
        write_dmat(os.path.join(args.out, "U_init.dmat"), init.U)
        write_dmat(os.path.join(args.out, "U_final.dmat"), server.U)
        write_dmat(os.path.join(args.out, "V_final.dmat"), np.vstack([c.V_i for c in clients]))
        write_dmat(os.path.join(args.out, "S_final.dmat"), np.hstack([c.S_i for c in clients]))
    except OSError as exc:
        raise CliError(f"cannot write results to {args.out}: {exc}") from exc

    last = trace.records[-1]
    err = "nan" if last.rel_error is None else f"{last.rel_error:.6g}"
    total = server.bytes_sent + server.bytes_received
    print(f"rounds={len(trace)} err={err} bytes={total}")
    return EXIT_OK


def cmd_eval(args):
    try:
        prob = problem_mod.load_problem(args.problem)
        if args.factors:
            U = read_dmat(os.path.join(args.factors, "U_final.dmat"))
            V = read_dmat(os.path.join(args.factors, "V_final.dmat"))
            S = read_dmat(os.path.join(args.factors, "S_final.dmat"))
        else:
            if not args.S or not (args.L or (args.U and args.V)):
                raise CliError("give --factors DIR, or --S with either --L or both --U and --V")
            if args.L:
                # factor the dense estimate so the singular values come from the same code path
                left, sig, right = problem_mod.rank_r_svd(read_dmat(args.L), prob.r)
                U, V = left * sig, right
            else:
                U, V = read_dmat(args.U), read_dmat(args.V)
            S = read_coo(args.S, (prob.m, prob.n)) if args.S.endswith(".coo") else read_dmat(args.S)
    except OSError as exc:
        raise CliError(f"cannot read input: {exc}") from exc
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if not prob.has_truth:
        raise CliError(f"{args.problem} carries no truth files")
    L = read_dmat(args.L) if (args.L and not args.factors) else U @ V.T
    try:
        err = evaluation.relative_error(L, S, prob)
        report = evaluation.sv_error(U, V, prob)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    report.rel_error = err
    if args.out:
        _makedirs(args.out)
        evaluation.write_sv_report(report, os.path.join(args.out, "sv_report.csv"))
    print(f"err={err:.6g} sv_rel_error={report.sv_rel_error:.6g} rank_gap_ratio={report.rank_gap_ratio:.6g}")
    return EXIT_OK


def cmd_sweep(args):
    _resolve_seed(args)
    s_grid = args.s_grid or evaluation.default_sweep_grid(args.n)[0]
    fracs = args.r_grid or [0.05, 0.1, 0.15, 0.2]
    r_grid = [max(1, round(f * args.n)) for f in fracs]
    hp = _hyperparams(args, default_p=max(r_grid))
    _makedirs(args.out)
    path = os.path.join(args.out, "sweep.csv")
    try:
        result = evaluation.phase_sweep(args.m, args.n, s_grid, r_grid, hp, out_csv=path,
                                        workers=args.workers)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}") from exc
    ok = int(np.sum(result.success()))
    print(f"cells={result.errors.size} recovered={ok} csv={path}")
    return EXIT_OK


def cmd_ablate(args):
    _resolve_seed(args)
    prob = _load_or_generate(args)
    hp = _hyperparams(args, default_p=prob.r)
    E = hp.E
    _makedirs(args.out)
    try:
        traces = evaluation.k_ablation(prob, hp, args.k_values, eta=args.eta, E=E,
                                       out_dir=args.out, workers=args.workers)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    for k, trace in traces.items():
        hit = evaluation.rounds_to_threshold(trace, args.threshold)
        floor = evaluation.error_floor(trace) if prob.has_truth else float("nan")
        print(f"K={k} rounds_to_{args.threshold:g}={hit if hit is not None else 'never'} floor={floor:.6g}")
    return EXIT_OK


def cmd_validate(args):
    hp = _hyperparams(args, default_p=1)
    warnings = consensus.validate_hyperparams(hp, args.m, args.n, smoothness=args.smoothness)
    if warnings:
        for w in warnings:
            print(f"warning: {w}")
    else:
        print("ok")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "run": cmd_run,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "ablate": cmd_ablate,
    "validate": cmd_validate,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"dcfpca {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
