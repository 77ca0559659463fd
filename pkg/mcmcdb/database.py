import logging

import six

from .evaluate import (EvaluationConfig, evaluate, evaluate_parallel,
    exact_query_marginals)
from .model import load_spec
from .ner import SKIP_CHAIN_WEIGHTS, UniformFlipProposer
from .query import Query, validate
from .sampler import UniformProposer
from .sql import parse
from .world import World, ingest_tokens, read_snapshot

logger = logging.getLogger(__name__)


class ProbabilisticDatabase(object):
    """One world of a probabilistic database together with the model of
    its hidden fields.

    ``world`` is a World or a path to a snapshot; ``model`` a
    FactorGraphSpec or a path to a model file. Without a ``proposer`` a
    skip-chain model gets document-batched label flips and any other
    model uniform flips over all hidden fields.
    """
    def __init__(self, world, model, proposer=None):
        if isinstance(world, six.string_types):
            world = read_snapshot(world)
        if not isinstance(world, World):
            raise TypeError("world must be a World or a snapshot path, not %r" % (world,))
        self.world = world
        if isinstance(model, six.string_types):
            self.model_path = model
            model = load_spec(model, world)
        else:
            self.model_path = None
            model.check_world(world)
        self.spec = model
        if proposer is None:
            proposer = self.default_proposer()
        self.proposer = proposer

    def __repr__(self):
        return "ProbabilisticDatabase(%r, %r)" % (self.world, self.spec)

    @classmethod
    def from_corpus(cls, corpus, model=SKIP_CHAIN_WEIGHTS, proposer=None):
        """A token corpus under the skip-chain model (the shipped weights
        unless ``model`` names another file)."""
        return cls(ingest_tokens(corpus), model, proposer)

    def default_proposer(self):
        names = [t.name for t in self.spec.templates]
        relation = self.world.match_relation('TOKEN')
        if relation is not None and 'skip' in names and 'transition' in names:
            return UniformFlipProposer(relation=relation)
        return UniformProposer()

    def parse(self, query):
        if isinstance(query, Query):
            return query
        return parse(query)

    def query(self, query):
        """The answer of ``query`` (text or AST) on the current world."""
        return validate(self.parse(query), self.world).execute(self.world)

    def marginals(self, query, n_samples=None, truth=None, seeds=None, config=None, **kwargs):
        """Estimated tuple marginals of ``query`` over ``n_samples``
        samples per chain; the remaining keywords configure the evaluation
        (see EvaluationConfig), or ``config`` is given whole. ``seeds``
        gives each chain its own seed, equal seeds giving equal chains.
        The stored world is not modified."""
        if config is None:
            config = EvaluationConfig(n_samples, **kwargs)
        q = self.parse(query)
        validate(q, self.world)
        logger.debug("evaluating %r with %r", q, config)
        if seeds is not None:
            return evaluate_parallel(self.world, self.spec, self.proposer, q,
                                     config.clone(chains=len(seeds)), seeds=seeds, truth=truth)
        return evaluate(self.world, self.spec, self.proposer, q, config, truth=truth)

    def exact_marginals(self, query, cap=10**6):
        """Tuple marginals by enumerating every world; only feasible for a
        handful of hidden variables."""
        return exact_query_marginals(self.spec, self.world, self.parse(query), cap=cap)
