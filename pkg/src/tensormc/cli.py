"""Command-line entry point: ``tensormc sweep|bench-cost|verify``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import ConfigError

log = logging.getLogger("tensormc")

THREADS_ENV = "TENSORMC_THREADS"


def _int_list(text):
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def build_parser():
    p = argparse.ArgumentParser(prog="tensormc", description="Tensor Monte Carlo estimators and benchmarks")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads for sweeps (default: ${THREADS_ENV} or 1)")
    p.add_argument("--seed", type=int, default=None, help="base seed (sweep seeds, benchmark and verify instances)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="run the experiments in a config file and write a CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--dump-graph", action="store_true", help="print the initial TMC factor graphs to stdout")
    s.add_argument("--allow-large", action="store_true", help=f"lift the K and N desk-scale caps")

    b = sub.add_parser("bench-cost", help="time TMC on a layered Gaussian chain")
    b.add_argument("--layers", type=_int_list, required=True, help="latent layer widths, e.g. 32,32,32,32,32")
    b.add_argument("--k", type=_int_list, required=True)
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--out", required=True)

    v = sub.add_parser("verify", help="run the built-in correctness checks")
    v.add_argument("--filter", default=None, help="only checks whose name contains this")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = args.threads if args.threads is not None else int(os.environ.get(THREADS_ENV, "1"))

    if args.command == "sweep":
        from .harness.config import load_config
        from .harness.sweep import dump_graphs, run_sweep
        try:
            configs = load_config(args.config, allow_large=args.allow_large)
        except (ConfigError, OSError) as e:
            print(f"config error: {e}", file=sys.stderr)
            return 2
        if args.dump_graph:
            print(dump_graphs(configs))
        try:
            records = run_sweep(configs, args.out, threads=threads, seed_base=args.seed)
        except OSError as e:
            print(f"cannot write {args.out}: {e}", file=sys.stderr)
            return 2
        log.info("wrote %d records to %s", len(records), args.out)
        return 0

    if args.command == "bench-cost":
        from .harness.bench import run_cost_benchmark, write_bench_csv
        rows = run_cost_benchmark(args.layers, args.k, args.reps, seed=args.seed or 0)
        write_bench_csv(rows, args.out)
        for K, ns in rows:
            log.info("K=%d median %.3f ms", K, ns / 1e6)
        return 0

    from .harness.verify import verify_suite
    results = verify_suite(args.filter, seed=args.seed or 0)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    return 0 if results and all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
