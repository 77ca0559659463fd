"""Query evaluation over the possible worlds of a model.

Both evaluators follow the same chain: the starting world (after any
burn-in) is sample 1, then ``n_samples - 1`` walks of ``steps_per_sample``
MH steps each produce the remaining samples. The naive evaluator runs the
query on every sampled world; the incremental one runs it once and then
maintains the answer from each walk's delta. With the same seed both draw
the same proposals, so they return identical counts.
"""

import collections
import copy
import csv
import io
import logging
import time
from multiprocessing import cpu_count

import six
from joblib import Parallel, delayed
from tqdm import tqdm

from .factors import exact_distribution
from .incremental import ViewMaintainer, apply_answer_delta, check_delta
from .query import validate
from .sampler import burn_in, make_rng, random_walk
from .schema import MCMCDBError, ParseError

logger = logging.getLogger(__name__)


TraceRow = collections.namedtuple('TraceRow', 'sample elapsed_ms loss')


class EvaluationConfig(object):
    modes = ('naive', 'incremental')

    def __init__(self, n_samples, steps_per_sample=10000, chains=1, seed=0,
                 mode='incremental', burn_in=0, debug_every=0, n_jobs=None,
                 progress=False, trace_every=1):
        self.n_samples = n_samples
        self.steps_per_sample = steps_per_sample
        self.chains = chains
        self.seed = seed
        self.mode = mode
        self.burn_in = burn_in
        self.debug_every = debug_every
        self.n_jobs = n_jobs
        self.progress = progress
        self.trace_every = trace_every
        self.check()

    def __repr__(self):
        return "EvaluationConfig(%s)" % ", ".join(
            "%s=%r" % (k, v) for k, v in sorted(self.__dict__.items()))

    def check(self):
        for name in ('n_samples', 'steps_per_sample', 'chains', 'trace_every'):
            value = getattr(self, name)
            if not isinstance(value, six.integer_types) or value < 1:
                raise ValueError("%s must be a positive integer, not %r" % (name, value))
        for name in ('burn_in', 'debug_every'):
            value = getattr(self, name)
            if not isinstance(value, six.integer_types) or value < 0:
                raise ValueError("%s must be a non-negative integer, not %r" % (name, value))
        if self.mode not in self.modes:
            raise ValueError("mode must be one of %s, not %r" % (", ".join(self.modes), self.mode))
        if self.n_jobs is not None and (not isinstance(self.n_jobs, six.integer_types)
                                        or self.n_jobs == 0):
            raise ValueError("n_jobs must be a non-zero integer, not %r" % (self.n_jobs,))

    def clone(self, **kwargs):
        options = dict(self.__dict__)
        options.update(kwargs)
        return EvaluationConfig(**options)


class MarginalEstimate(object):
    """Per-tuple counts ``m`` over ``z`` sampled worlds. ``probability(t)``
    is m/z, the fraction of sampled answers holding t."""
    def __init__(self, counts=None, z=0, columns=None):
        self.counts = dict((tuple(t), n) for t, n in six.iteritems(dict(counts or {})) if n)
        self.z = z
        self.columns = list(columns) if columns is not None else None
        self.trace = []
        self.accepted = 0
        self.proposed = 0
        self.elapsed_ms = 0
        self.tuples_read = 0
        for t, n in six.iteritems(self.counts):
            if n < 0 or n > z:
                raise ValueError("Count %d for %r is outside [0, %d]" % (n, t, z))

    def __repr__(self):
        return "MarginalEstimate(z=%d, %d tuples)" % (self.z, len(self.counts))

    def __len__(self):
        return len(self.counts)

    def __eq__(self, other):
        if not isinstance(other, MarginalEstimate):
            return NotImplemented
        return self.z == other.z and self.counts == other.counts

    def __ne__(self, other):
        eq = self.__eq__(other)
        return eq if eq is NotImplemented else not eq

    __hash__ = None

    def probability(self, t):
        if not self.z:
            return 0.0
        return self.counts.get(tuple(t), 0) / float(self.z)

    def probabilities(self):
        return dict((t, self.probability(t)) for t in self.counts)

    def merge(self, other):
        counts = dict(self.counts)
        for t, n in six.iteritems(other.counts):
            counts[t] = counts.get(t, 0) + n
        merged = MarginalEstimate(counts, self.z + other.z, self.columns or other.columns)
        merged.accepted = self.accepted + other.accepted
        merged.proposed = self.proposed + other.proposed
        merged.elapsed_ms = max(self.elapsed_ms, other.elapsed_ms)
        merged.tuples_read = self.tuples_read + other.tuples_read
        return merged


class MarginalCounter(object):
    """Counts answer membership per sample. Tuples that stay in the answer
    are not touched between samples: each records the sample it entered
    at, and its count grows by the span when it leaves."""
    def __init__(self):
        self.closed = {}
        self.since = {}
        self.z = 0

    def start(self, answer):
        for t in answer:
            self.since[t] = 0
        self.z = 1

    def record(self, answer):
        """Naive counting: one pass over the whole answer."""
        for t in answer:
            self.closed[t] = self.closed.get(t, 0) + 1
        self.z += 1

    def record_changes(self, answer, changed, before):
        for t in changed:
            now = t in answer
            if before[t] and not now:
                self.closed[t] = self.closed.get(t, 0) + self.z - self.since.pop(t)
            elif now and not before[t]:
                self.since[t] = self.z
        self.z += 1

    def counts(self):
        counts = dict(self.closed)
        for t, entered in six.iteritems(self.since):
            counts[t] = counts.get(t, 0) + self.z - entered
        return counts

    def estimate(self, columns=None):
        return MarginalEstimate(self.counts(), self.z, columns)


def _now():
    return time.perf_counter()


def run_chain(world, spec, proposer, query, config, seed=None, chain=0, truth=None):
    """One chain on a private copy of ``world`` and ``proposer``. Returns
    a MarginalEstimate carrying the loss trace and acceptance counts."""
    world = world.clone()
    proposer = copy.deepcopy(proposer)
    rng = make_rng(config.seed if seed is None else seed, chain)
    plan = validate(query, world)
    k = config.steps_per_sample
    burn_in(world, spec, proposer, rng, config.burn_in, k)

    started = _now()
    counter = MarginalCounter()
    incremental = config.mode == 'incremental'
    if incremental:
        session = ViewMaintainer(plan, world)
        answer = session.answer
        counter.start(answer)
    else:
        answer = plan.execute(world)
        counter.record(answer)
    trace = []

    def trace_point():
        loss = squared_error(counter.estimate(), truth)
        trace.append(TraceRow(counter.z, int((_now() - started) * 1000), loss))

    if truth is not None:
        trace_point()
    accepted = 0
    samples = range(1, config.n_samples)
    if config.progress:
        samples = tqdm(samples, desc="chain %d (%s)" % (chain, config.mode), position=chain)
    for i in samples:
        walk = random_walk(world, spec, proposer, rng, k)
        accepted += walk.accepted
        if incremental:
            check_delta(world, walk.delta, applied=True)
            d = session.delta(walk.delta)
            changed = set(d.removals) | set(d.additions)
            before = dict((t, t in answer) for t in changed)
            if d:
                apply_answer_delta(answer, d)
            counter.record_changes(answer, changed, before)
            if config.debug_every and i % config.debug_every == 0:
                session.check()
        else:
            answer = plan.execute(world)
            counter.record(answer)
        if truth is not None and (counter.z % config.trace_every == 0 or
                                  counter.z == config.n_samples):
            trace_point()

    estimate = counter.estimate(plan.column_names)
    estimate.trace = trace
    estimate.accepted = accepted
    estimate.proposed = (config.n_samples - 1) * k
    estimate.elapsed_ms = int((_now() - started) * 1000)
    estimate.tuples_read = world.tuples_read
    logger.info("chain %d (%s): %d samples, %d of %d proposals accepted, %d tuples read, %d ms",
                chain, config.mode, estimate.z, accepted, estimate.proposed,
                estimate.tuples_read, estimate.elapsed_ms)
    return estimate


def evaluate_naive(world, spec, proposer, query, config, truth=None):
    return run_chain(world, spec, proposer, query, config.clone(mode='naive'), truth=truth)


def evaluate_incremental(world, spec, proposer, query, config, truth=None):
    return run_chain(world, spec, proposer, query, config.clone(mode='incremental'), truth=truth)


def evaluate_parallel(worlds, spec, proposer, query, config, seeds=None, truth=None):
    """Run ``config.chains`` chains and merge their counts in chain order.

    ``worlds`` is one World (cloned per chain) or a list of them. Chain c
    draws from stream (config.seed, c); explicit ``seeds`` give chain c the
    stream (seeds[c], 0) instead, so equal seeds give equal chains.
    """
    if not isinstance(worlds, (list, tuple)):
        worlds = [worlds] * config.chains
    chains = len(worlds)
    if chains < 1:
        raise ValueError("evaluate_parallel needs at least one world")
    if seeds is None:
        streams = [(config.seed, c) for c in range(chains)]
    else:
        if len(seeds) != chains:
            raise ValueError("Got %d seeds for %d chains" % (len(seeds), chains))
        streams = [(s, 0) for s in seeds]
    n_jobs = config.n_jobs or min(chains, cpu_count())
    results = Parallel(n_jobs=n_jobs)(
        delayed(run_chain)(w, spec, proposer, query, config, seed=s, chain=c, truth=truth)
        for w, (s, c) in zip(worlds, streams))
    merged = results[0]
    for r in results[1:]:
        merged = merged.merge(r)
    if truth is not None:
        merged.trace = merge_traces([r.trace for r in results])
    return merged


def merge_traces(traces):
    """Loss of the pooled estimate at each common trace point is not
    recoverable from per-chain losses, so pooled traces report the mean of
    the chains' losses."""
    merged = []
    for rows in zip(*traces):
        merged.append(TraceRow(rows[0].sample * len(rows),
                               max(r.elapsed_ms for r in rows),
                               sum(r.loss for r in rows) / float(len(rows))))
    return merged


def evaluate(world, spec, proposer, query, config, truth=None):
    if config.chains > 1:
        return evaluate_parallel(world, spec, proposer, query, config, truth=truth)
    return run_chain(world, spec, proposer, query, config, truth=truth)


def exact_query_marginals(spec, world, query, cap=10**6):
    """Pr[t in Q(W)] by enumerating every possible world."""
    plan = validate(query, world)
    distribution = exact_distribution(spec, world, cap=cap)
    marginals = {}
    for w, p in distribution.worlds():
        for t in plan.execute(w):
            marginals[t] = marginals.get(t, 0.0) + p
    return marginals


def _probabilities(x):
    if isinstance(x, MarginalEstimate):
        return x.probabilities()
    return dict(x)


def squared_error(estimate, truth):
    """Sum over the union of tuples of the squared difference of their
    probabilities."""
    p, q = _probabilities(estimate), _probabilities(truth)
    return sum((p.get(t, 0.0) - q.get(t, 0.0)) ** 2 for t in set(p) | set(q))


def normalized_squared_error(losses):
    """A loss series divided by its largest value."""
    losses = list(losses)
    top = max(losses) if losses else 0.0
    if not top:
        return [0.0 for _ in losses]
    return [l / top for l in losses]


def half_loss_point(trace):
    """The first trace row whose loss is at most half the first row's loss;
    None if the loss never halves."""
    if not trace:
        return None
    half = trace[0].loss / 2.0
    for row in trace:
        if row.loss <= half:
            return row
    return None


def time_to_half(trace):
    """Elapsed ms until the loss first halves, or None."""
    row = half_loss_point(trace)
    return row.elapsed_ms if row is not None else None


def _sort_key(t):
    return tuple((0, v, '') if isinstance(v, six.integer_types) else (1, 0, six.text_type(v))
                 for v in t)


def format_probability(p):
    return format(p, '.12g')


def write_marginals(estimate, f, columns=None):
    """CSV: the answer columns, then count, z and probability."""
    columns = columns or estimate.columns or \
        ['c%d' % i for i in range(len(next(iter(estimate.counts), ())))]
    writer = csv.writer(f, lineterminator='\n')
    writer.writerow(list(columns) + ['count', 'z', 'probability'])
    for t in sorted(estimate.counts, key=_sort_key):
        writer.writerow([six.text_type(v) for v in t] +
                        [estimate.counts[t], estimate.z, format_probability(estimate.probability(t))])


def write_exact_marginals(marginals, f, columns):
    writer = csv.writer(f, lineterminator='\n')
    writer.writerow(list(columns) + ['probability'])
    for t in sorted(marginals, key=_sort_key):
        writer.writerow([six.text_type(v) for v in t] + [format_probability(marginals[t])])


def write_trace(trace, f, timing=True):
    writer = csv.writer(f, lineterminator='\n')
    writer.writerow(['sample', 'elapsed_ms', 'loss'])
    for row in trace:
        writer.writerow([row.sample, row.elapsed_ms if timing else 0, format_probability(row.loss)])


def read_marginals(path, plan):
    """Probabilities from a marginal CSV (as written by write_marginals or
    write_exact_marginals), typed by the plan's answer columns."""
    fields = plan.root.fields
    width = len(fields)
    truth = {}
    with io.open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or 'probability' not in header or len(header) < width + 1:
            raise ParseError("not a marginals file: expected %d answer columns and a "
                    "probability column" % width, lineno=1, source=path)
        p_col = header.index('probability')
        for row in reader:
            if not row:
                continue
            try:
                t = tuple(int(c) if field is None else field.from_text(c)
                          for field, c in zip(fields, row[:width]))
                truth[t] = float(row[p_col])
            except (ValueError, IndexError) as e:
                raise ParseError("bad marginals row: %s" % e, lineno=reader.line_num, source=path)
            except MCMCDBError as e:
                raise ParseError(e.args[0], lineno=reader.line_num, source=path)
    return truth
