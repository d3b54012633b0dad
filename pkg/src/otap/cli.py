"""Command line interface: ``otap decompose | experiment | init-ratio | check``.

Exit codes: 0 success/converged, 1 error, 2 max iterations reached,
3 degenerate weights, 4 infeasible factors (``check``).
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings


from . import tensor as tc
from .exceptions import OtapError
from .harness import (
    ExperimentSpec,
    append_result_csv,
    init_ratio_experiment,
    run_experiment,
    uniqueness_check,
)
from .initializers import get_initializer, random_init
from .model import feasibility_check, kkt_residual, objective_G, objective_H, read_factors, write_factors
from .solver import CONVERGED, DEGENERATE, MAX_ITER, SolverConfig, run

EXIT_OK, EXIT_ERROR, EXIT_MAXITER, EXIT_DEGENERATE, EXIT_INFEASIBLE = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _dims(text):
    try:
        dims = tuple(int(x) for x in text.replace("x", ",").split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid dims {text!r}") from None
    if not dims or any(n < 1 for n in dims):
        raise argparse.ArgumentTypeError(f"invalid dims {text!r}")
    return dims


def build_parser():
    p = _Parser(prog="otap", description="CP approximation with orthonormal factors (epsilon-ALS).")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("decompose", help="decompose a tensor file")
    d.add_argument("--input", required=True)
    d.add_argument("--rank", type=int, required=True)
    d.add_argument("--t", type=int, required=True)
    d.add_argument("--eps1", type=float, default=1e-8)
    d.add_argument("--eps2", type=float, default=1e-8)
    d.add_argument("--tol", type=float, default=1e-4)
    d.add_argument("--max-iter", type=int, default=2000)
    d.add_argument("--init", choices=["procedure", "random"], default="procedure")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--auto-reduce-rank", action="store_true")
    d.add_argument("--out")
    d.add_argument("--trace")

    e = sub.add_parser("experiment", help="run a batch of synthetic instances and append one CSV row")
    e.add_argument("--dims", type=_dims, required=True)
    e.add_argument("--rank", type=int, required=True)
    e.add_argument("--t", type=int, required=True)
    e.add_argument("--beta", type=float, required=True)
    e.add_argument("--instances", type=int, default=50)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--eps1", type=float, default=1e-8)
    e.add_argument("--eps2", type=float, default=1e-8)
    e.add_argument("--tol", type=float, default=1e-4)
    e.add_argument("--max-iter", type=int, default=2000)
    e.add_argument("--init", choices=["procedure", "random"], default="procedure")
    e.add_argument("--noise", choices=["uniform", "normal"], default="uniform")
    e.add_argument("--out", required=True)

    r = sub.add_parser("init-ratio", help="mean G(procedure)/G(random) over random tensors")
    r.add_argument("--dims", type=_dims, required=True)
    r.add_argument("--rank", type=int, required=True)
    r.add_argument("--t", type=int, required=True)
    r.add_argument("--instances", type=int, default=50)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--dist", choices=["normal", "uniform"], default="normal")

    c = sub.add_parser("check", help="feasibility, KKT residual and uniqueness of a factor file")
    c.add_argument("--input", required=True)
    c.add_argument("--factors", required=True)
    return p


def _echo(args):
    cfg = {k: v for k, v in vars(args).items()}
    print(json.dumps(cfg, sort_keys=True, default=list))


def _check_rank(shape, R, t):
    if not 1 <= t <= len(shape):
        raise ValueError(f"t must lie in [1, {len(shape)}]")
    if R < 1:
        raise ValueError("rank must be positive")
    for j in range(len(shape) - t, len(shape)):
        if shape[j] < R:
            raise ValueError(f"rank exceeds mode extent: R={R} > n_{j}={shape[j]}")


def cmd_decompose(args):
    A = tc.read_tensor(args.input)
    _check_rank(A.shape, args.rank, args.t)
    config = SolverConfig(eps1=args.eps1, eps2=args.eps2, tol=args.tol, max_iter=args.max_iter,
                          auto_reduce_rank=args.auto_reduce_rank)
    if args.init == "procedure":
        init = get_initializer(A, args.rank, args.t)
    else:
        init = random_init(A, args.rank, args.t, seed=args.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fs, trace = run(A, args.rank, args.t, config, init)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if args.out:
        write_factors(args.out, fs)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            trace.to_csv(fh)
    kkt = kkt_residual(A, fs)
    print(f"G = {objective_G(A, fs):.17g}")
    print(f"H = {objective_H(A, fs):.17g}")
    print(f"kkt_total = {kkt.total:.6e}")
    print(f"iterations = {trace.n_iter}")
    print(f"status = {trace.status}")
    return {CONVERGED: EXIT_OK, MAX_ITER: EXIT_MAXITER, DEGENERATE: EXIT_DEGENERATE}[trace.status]


def cmd_experiment(args):
    spec = ExperimentSpec(dims=args.dims, R=args.rank, t=args.t, beta=args.beta, eps1=args.eps1,
                          eps2=args.eps2, n_instances=args.instances, seed_base=args.seed,
                          init=args.init, tol=args.tol, max_iter=args.max_iter, noise=args.noise)
    if not 1 <= spec.t <= len(spec.dims):
        raise ValueError(f"t must lie in [1, {len(spec.dims)}]")
    row = run_experiment(spec)
    append_result_csv(args.out, row)
    with open(args.out + ".manifest.jsonl", "a") as fh:
        fh.write(json.dumps(row.manifest()) + "\n")
    print(
        f"mean_iter={row.mean_iter:.2f} median_iter={row.median_iter:.1f} "
        f"mean_time_s={row.mean_time_s:.4f} mean_rel_err={row.mean_rel_err:.4e} "
        f"converged={row.count(CONVERGED)} maxiter={row.count(MAX_ITER)} "
        f"degenerate={row.count(DEGENERATE)} errors={row.n_errors}"
    )
    for r in row.instances:
        if r.error:
            print(f"instance seed={r.seed}: {r.error}", file=sys.stderr)
    return EXIT_OK


def cmd_init_ratio(args):
    _check_rank(args.dims, args.rank, args.t)
    ratio = init_ratio_experiment(args.dims, args.rank, args.t, args.instances, args.seed, args.dist)
    print(f"mean_ratio = {ratio:.6g}")
    return EXIT_OK


def cmd_check(args):
    A = tc.read_tensor(args.input)
    F = read_factors(args.factors)
    if F.shape != A.shape:
        raise ValueError(f"factor rows {F.shape} do not match tensor shape {A.shape}")
    report = feasibility_check(F)
    if report:
        print("infeasible")
        for v in report:
            print(f"  {v}")
    else:
        print("feasible")
    print(f"kkt_total = {kkt_residual(A, F).total:.6e}")
    try:
        print(f"uniqueness = {uniqueness_check(F)}")
    except OtapError as exc:
        print(f"uniqueness = NotCertified: {exc}")
    return EXIT_INFEASIBLE if report else EXIT_OK


COMMANDS = {
    "decompose": cmd_decompose,
    "experiment": cmd_experiment,
    "init-ratio": cmd_init_ratio,
    "check": cmd_check,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    _echo(args)
    try:
        return COMMANDS[args.command](args)
    except (OtapError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
