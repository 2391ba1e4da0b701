"""``homagg`` command-line driver."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PROTOCOL = 3


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> list[int]:
    return [int(float(x)) for x in text.split(",") if x]


def _add_common(p: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="hash and data seed")
    p.add_argument("--batch-width", type=int, default=d(1024), help="columns per batch row")
    p.add_argument("--index", choices=("bitmap", "bloom", "auto"), default=d("bitmap"))
    p.add_argument("--gamma", type=float, default=d(1.23), help="peeling provisioning constant")
    p.add_argument("--out", default=d(None), help="output file (default stdout)")


def _add_sizing(p: argparse.ArgumentParser):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--rows", type=int, help="sketch rows")
    g.add_argument("--fraction", type=float, default=1.0,
                   help="sketch size as a fraction of the original (default 1.0)")
    p.add_argument("--block-rows", type=int, default=0, help="rows per peeling block (0 = off)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="homagg", description=__doc__)
    _add_common(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        _add_common(p, suppress=True)
        return p

    p = cmd("sweep", "recovery metrics over a grid of compressed sizes")
    p.add_argument("--n-params", type=int, default=1 << 20)
    p.add_argument("--preset", choices=("ncf", "lstm", "vgg19", "bert"))
    p.add_argument("--sparsity", type=float, default=0.304)
    p.add_argument("--distribution", choices=("uniform", "clustered"), default="uniform")
    p.add_argument("--value-law", choices=("normal", "uniform", "integer"), default="normal")
    p.add_argument("--fractions", type=_floats, default=None)
    p.add_argument("--seeds", type=int, default=1, help="seeds per grid point")
    p.add_argument("--block-rows", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--plot", help="also render a PNG figure here")

    p = cmd("theory", "index/sketch space cost against the lower bound")
    p.add_argument("--C", dest="bit_widths", type=_ints, default=[4, 8, 16, 32])
    p.add_argument("--lambdas", type=_floats, default=[1, 9, 99, 999])
    p.add_argument("--n", type=float, default=10_000)
    p.add_argument("--plot")

    p = cmd("throughput", "wall-clock scaling of compress, merge and recover")
    p.add_argument("--n", dest="ns", type=_ints, default=[1_000_000, 2_000_000, 4_000_000])
    p.add_argument("--sparsity", type=float, default=0.304)
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--repeats", type=int, default=3)

    p = cmd("compress", "compress a gradient file")
    p.add_argument("--input", required=True)
    _add_sizing(p)

    p = cmd("recover", "recover a compressed file into a gradient file")
    p.add_argument("--input", required=True)
    p.add_argument("--block-rows", type=int, default=0)

    p = cmd("serve", "run the aggregator")
    p.add_argument("--bind", required=True, help="HOST:PORT")
    p.add_argument("--workers", type=int, required=True)
    p.add_argument("--block-rows", type=int, default=0)
    p.add_argument("--round-timeout", type=float, default=60.0)

    p = cmd("worker", "take part in one aggregation round")
    p.add_argument("--server", required=True, help="HOST:PORT")
    p.add_argument("--id", type=int, required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--round", type=int, default=0)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--expected-nonzero", type=int,
                   help="index sizing for bloom/auto (must agree across workers)")
    _add_sizing(p)

    p = cmd("allreduce", "in-memory aggregation of several gradient files")
    p.add_argument("--inputs", nargs="+", required=True)
    _add_sizing(p)
    return parser


def _sketch_config(args, n_params: int):
    from homagg.codec import rows_for_fraction
    from homagg.countsketch import SketchConfig

    rows = args.rows or rows_for_fraction(n_params, args.fraction, args.batch_width,
                                          args.block_rows)
    return SketchConfig(rows=rows, batch_width=args.batch_width, seed=args.seed,
                        gamma=args.gamma, block_rows=args.block_rows)


def _emit(text: str, args):
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _stats_csv(stats) -> str:
    from homagg.bench import write_csv

    cols = ("recovery_rate", "peel_iterations", "candidates", "fallback_count")
    return write_csv([vars(stats)], cols, "recovery-stats")


def run(args) -> int:
    from homagg import bench

    if args.command == "sweep":
        from homagg.gradient import PRESETS, Distribution, SparsityProfile, ValueLaw

        sparsity = PRESETS[args.preset] if args.preset else args.sparsity
        profile = SparsityProfile(sparsity, Distribution(args.distribution),
                                  ValueLaw(args.value_law), seed=args.seed)
        spec = bench.SweepSpec(args.n_params, profile,
                               tuple(args.fractions or bench.DEFAULT_FRACTIONS), args.seeds,
                               args.index, args.batch_width, args.gamma, args.block_rows)
        rows = bench.cmd_sweep(spec, args.jobs)
        _emit(bench.write_csv(rows, bench.SWEEP_COLUMNS, "sweep"), args)
        if args.plot:
            from homagg.plotting import plot_sweep

            plot_sweep(rows, args.plot, threshold=args.gamma * (1 - sparsity))
    elif args.command == "theory":
        rows = bench.cmd_theory(args.bit_widths, args.lambdas, args.n, args.gamma)
        _emit(bench.write_csv(rows, bench.THEORY_COLUMNS, "theory"), args)
        if args.plot:
            from homagg.plotting import plot_theory

            plot_theory(rows, args.plot)
    elif args.command == "throughput":
        rows = bench.cmd_throughput(args.ns, args.sparsity, args.fraction, args.batch_width,
                                    args.seed, args.repeats)
        _emit(bench.write_csv(rows, bench.THROUGHPUT_COLUMNS, "throughput"), args)
    elif args.command == "compress":
        from homagg.codec import compress
        from homagg.gradient import read_gradient
        from homagg.wire import serialize

        g = read_gradient(args.input)
        data = serialize(compress(g, _sketch_config(args, g.size), args.index))
        if not args.out:
            raise ValueError("compress needs --out")
        Path(args.out).write_bytes(data)
    elif args.command == "recover":
        from homagg.codec import recover
        from homagg.gradient import write_gradient
        from homagg.wire import deserialize

        cg = deserialize(Path(args.input).read_bytes(), args.block_rows, args.gamma)
        g, stats = recover(cg)
        if not args.out:
            raise ValueError("recover needs --out")
        write_gradient(args.out, g)
        sys.stdout.write(_stats_csv(stats))
    elif args.command == "serve":
        from homagg.aggregation.server import serve

        serve(args.bind, args.workers, args.block_rows, args.round_timeout)
    elif args.command == "worker":
        from homagg.aggregation.worker import worker_round
        from homagg.codec import plan_index
        from homagg.gradient import read_gradient, write_gradient

        g = read_gradient(args.input)
        expected = args.expected_nonzero or int(np.count_nonzero(g))
        index = plan_index(g.size, expected, args.index, gamma=args.gamma)
        agg, stats = worker_round(args.server, args.id, g, _sketch_config(args, g.size), index,
                                  args.round, args.timeout)
        if args.out:
            write_gradient(args.out, agg)
        sys.stdout.write(_stats_csv(stats))
    elif args.command == "allreduce":
        from homagg.aggregation.inmemory import allreduce_inmemory
        from homagg.gradient import read_gradient, write_gradient

        grads = [read_gradient(p) for p in args.inputs]
        agg, stats = allreduce_inmemory(grads, _sketch_config(args, grads[0].size), args.index)
        if args.out:
            write_gradient(args.out, agg)
        sys.stdout.write(_stats_csv(stats))
    return EXIT_OK


def main(argv=None) -> int:
    from homagg.aggregation.protocol import AggregationNack, ProtocolError

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (AggregationNack, ProtocolError, TimeoutError, ConnectionError) as exc:
        print(f"homagg: protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (ValueError, TypeError, OSError) as exc:
        print(f"homagg: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
