"""mcmcdb command line.

::

    mcmcdb ingest CORPUS STORE
    mcmcdb generate CORPUS --docs N --tokens-per-doc M --seed S
    mcmcdb evaluate STORE MODEL QUERY --samples N [--mode naive|incremental] ...
    mcmcdb oracle STORE MODEL QUERY [--cap C]
    mcmcdb benchmark --sizes 1000,10000 --query QUERY ...

STORE is a snapshot written by ``ingest``, a token corpus or a model file
with <row> elements. Exit codes: 0 success, 1 usage, 2 bad data or query,
3 state space over the oracle cap.
"""

import argparse
import contextlib
import csv
import io
import logging
import os
import shutil
import sys
import tempfile

from . import __version__
from .database import ProbabilisticDatabase
from .evaluate import (EvaluationConfig, exact_query_marginals, half_loss_point,
    read_marginals, write_exact_marginals, write_marginals, write_trace)
from .model import ModelFile
from .ner import SKIP_CHAIN_WEIGHTS, bio_violations, generate_synthetic_corpus
from .schema import MCMCDBError, StateSpaceError
from .sql import compile_query
from .world import ingest_tokens, load_world, write_snapshot

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CAP = 3


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, "%s: error: %s\n" % (self.prog, message))


def positive_int(s):
    try:
        value = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError("%r is not an integer" % s)
    if value < 1:
        raise argparse.ArgumentTypeError("%r is not positive" % s)
    return value


def non_negative_int(s):
    try:
        value = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError("%r is not an integer" % s)
    if value < 0:
        raise argparse.ArgumentTypeError("%r is negative" % s)
    return value


def size_list(s):
    """Comma separated positive integers."""
    try:
        sizes = [int(part) for part in s.split(',')]
    except ValueError:
        raise argparse.ArgumentTypeError("sizes must be comma separated integers, not %r" % s)
    if not sizes or any(n < 1 for n in sizes):
        raise argparse.ArgumentTypeError("sizes must be positive, not %r" % s)
    return sizes


@contextlib.contextmanager
def output(path):
    if path in (None, '-'):
        yield sys.stdout
    else:
        with io.open(path, 'w', encoding='utf-8', newline='') as f:
            yield f


def open_store(path):
    """A snapshot, a token corpus, or the <row> elements of a model file."""
    with io.open(path, 'r', encoding='utf-8') as f:
        head = f.read(256).lstrip()
    if head.startswith('<'):
        return ModelFile(path).world()
    return load_world(path)


def cmd_ingest(args):
    world = ingest_tokens(args.corpus)
    violations = bio_violations(world, attribute='TRUTH')
    if violations:
        doc = min(violations)
        first = violations[doc][0]
        logger.warning("TRUTH labels break BIO order %d times in %d documents, first in "
                       "document %r at position %d: %s after %s",
                       sum(map(len, violations.values())), len(violations), doc,
                       first.index, first.label, first.previous)
    write_snapshot(world, args.store)
    logger.info("ingested %d tuples from %s into %s", len(world), args.corpus, args.store)
    return EXIT_OK


def cmd_generate(args):
    vocab = args.vocab.split(',') if args.vocab else None
    generate_synthetic_corpus(args.corpus, args.docs, args.tokens_per_doc, vocab=vocab,
                              seed=args.seed)
    return EXIT_OK


def trace_path(args):
    if args.trace_out:
        return args.trace_out
    if args.out in (None, '-'):
        raise UsageError("--truth needs --trace-out when the marginals go to stdout")
    return os.path.splitext(args.out)[0] + '-trace.csv'


def cmd_evaluate(args):
    world = open_store(args.store)
    db = ProbabilisticDatabase(world, args.model)
    plan = compile_query(args.query, world)
    truth = read_marginals(args.truth, plan) if args.truth else None
    traces = trace_path(args) if truth is not None else None
    config = EvaluationConfig(args.samples, steps_per_sample=args.steps_per_sample,
                              chains=args.chains, seed=args.seed, mode=args.mode,
                              burn_in=args.burn_in, n_jobs=args.jobs, progress=args.progress)
    seeds = [args.seed] * args.chains if args.replicate_seed else None
    estimate = db.marginals(plan.query, truth=truth, seeds=seeds, config=config)
    with output(args.out) as f:
        write_marginals(estimate, f, plan.column_names)
    if traces is not None:
        with output(traces) as f:
            write_trace(estimate.trace, f, timing=not args.no_timing)
    logger.info("%d answer tuples over %d samples", len(estimate), estimate.z)
    return EXIT_OK


def cmd_oracle(args):
    world = open_store(args.store)
    db = ProbabilisticDatabase(world, args.model)
    plan = compile_query(args.query, world)
    marginals = exact_query_marginals(db.spec, db.world, plan.query, cap=args.cap)
    with output(args.out) as f:
        write_exact_marginals(marginals, f, plan.column_names)
    return EXIT_OK


def cmd_benchmark(args):
    """For each corpus size: estimate the truth with a long incremental
    chain, then trace both evaluators against it and report when each
    first halves its initial loss."""
    rows = []
    workdir = tempfile.mkdtemp(prefix='mcmcdb-benchmark-')
    try:
        for size in args.sizes:
            docs = max(1, size // args.tokens_per_doc)
            corpus = os.path.join(workdir, 'corpus-%d.tsv' % size)
            generate_synthetic_corpus(corpus, docs, args.tokens_per_doc, seed=args.seed)
            db = ProbabilisticDatabase(ingest_tokens(corpus), args.model)
            q = compile_query(args.query, db.world).query
            truth = db.marginals(q, args.truth_samples, steps_per_sample=args.steps_per_sample,
                                 seed=args.seed + 1).probabilities()
            for mode in ('naive', 'incremental'):
                estimate = db.marginals(q, args.samples, truth=truth, mode=mode,
                                        steps_per_sample=args.steps_per_sample, seed=args.seed)
                point = half_loss_point(estimate.trace)
                rows.append((len(db.world), mode,
                             '' if point is None else point.sample,
                             '' if point is None else (point.elapsed_ms if not args.no_timing else 0),
                             estimate.tuples_read))
                logger.info("%d tuples, %s: %r", len(db.world), mode, point)
    finally:
        shutil.rmtree(workdir)
    with output(args.out) as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['tuples', 'mode', 'samples_to_half', 'time_to_half_ms', 'tuples_read'])
        writer.writerows(rows)
    return EXIT_OK


def add_evaluation_options(p, steps_per_sample=10000):
    p.add_argument('--samples', type=positive_int, required=True,
                   help='samples per chain, the starting world included')
    p.add_argument('--steps-per-sample', type=positive_int, default=steps_per_sample,
                   help='MH steps between samples (default %d)' % steps_per_sample)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--no-timing', action='store_true',
                   help='write 0 for every elapsed time so output is reproducible')


def build_parser():
    parser = ArgumentParser(prog='mcmcdb',
                            description='Query a probabilistic database by MCMC sampling')
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true')
    verbosity.add_argument('-q', '--quiet', action='store_true')
    commands = parser.add_subparsers(dest='command', metavar='COMMAND')
    commands.required = True

    p = commands.add_parser('ingest', help='load a token corpus into a snapshot')
    p.add_argument('corpus')
    p.add_argument('store')
    p.set_defaults(func=cmd_ingest)

    p = commands.add_parser('generate', help='write a synthetic token corpus')
    p.add_argument('corpus')
    p.add_argument('--docs', type=non_negative_int, required=True)
    p.add_argument('--tokens-per-doc', type=non_negative_int, required=True)
    p.add_argument('--vocab', help='comma separated strings to draw every token from')
    p.add_argument('--seed', type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = commands.add_parser('evaluate', help='estimate tuple marginals of a query')
    p.add_argument('store')
    p.add_argument('model')
    p.add_argument('query')
    add_evaluation_options(p)
    p.add_argument('--mode', choices=EvaluationConfig.modes, default='incremental')
    p.add_argument('--chains', type=positive_int, default=1)
    p.add_argument('--jobs', type=int, default=None,
                   help='parallel workers (default: one per chain, at most one per CPU)')
    p.add_argument('--replicate-seed', action='store_true',
                   help='run every chain from --seed instead of independent streams')
    p.add_argument('--burn-in', type=non_negative_int, default=0,
                   help='walks discarded before the first sample')
    p.add_argument('--truth', help='marginals CSV to trace the squared loss against')
    p.add_argument('--out', default='-')
    p.add_argument('--trace-out')
    p.add_argument('--progress', action='store_true')
    p.set_defaults(func=cmd_evaluate)

    p = commands.add_parser('oracle', help='exact tuple marginals by enumeration')
    p.add_argument('store')
    p.add_argument('model')
    p.add_argument('query')
    p.add_argument('--cap', type=positive_int, default=10**6,
                   help='refuse state spaces with more worlds than this')
    p.add_argument('--out', default='-')
    p.set_defaults(func=cmd_oracle)

    p = commands.add_parser('benchmark', help='time to half loss, naive against incremental')
    p.add_argument('--sizes', type=size_list, required=True,
                   help='comma separated corpus sizes in tokens')
    p.add_argument('--query', required=True)
    p.add_argument('--model', default=SKIP_CHAIN_WEIGHTS)
    # short walks, so the query dominates the cost of a sample
    add_evaluation_options(p, steps_per_sample=100)
    p.add_argument('--truth-samples', type=positive_int, default=None,
                   help='samples of the chain estimating the truth (default 10 x --samples)')
    p.add_argument('--tokens-per-doc', type=positive_int, default=50)
    p.add_argument('--out', default='-')
    p.set_defaults(func=cmd_benchmark)
    return parser


def configure_logging(args):
    level = logging.INFO if args.verbose else logging.ERROR if args.quiet else logging.WARNING
    logging.basicConfig(level=level, stream=sys.stderr,
                        format='%(levelname)s %(name)s: %(message)s')


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, 'truth_samples', 0) is None:
        args.truth_samples = 10 * args.samples
    configure_logging(args)
    try:
        return args.func(args)
    except StateSpaceError as e:
        sys.stderr.write("mcmcdb: %s\n" % e)
        return EXIT_CAP
    except MCMCDBError as e:
        sys.stderr.write("mcmcdb: %s\n" % e)
        return EXIT_DATA
    except (UsageError, ValueError) as e:
        sys.stderr.write("mcmcdb: %s\n" % e)
        return EXIT_USAGE
    except (IOError, OSError) as e:
        sys.stderr.write("mcmcdb: %s\n" % e)
        return EXIT_DATA


if __name__ == '__main__':
    sys.exit(main())
