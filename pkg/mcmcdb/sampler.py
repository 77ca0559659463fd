"""Metropolis-Hastings over Worlds.

A proposer suggests a Delta together with the forward and backward log
proposal probabilities; mh_step accepts it with probability
``exp(min(0, log pi(w') - log pi(w) + log q(w|w') - log q(w'|w)))``. The
normaliser of pi is never needed, only the local score ratio.
"""

import collections
import logging
import math

import numpy

from .factors import log_score_ratio
from .schema import ContractViolation
from .world import Delta

logger = logging.getLogger(__name__)


Proposal = collections.namedtuple('Proposal', 'delta log_q_forward log_q_backward')

StepResult = collections.namedtuple('StepResult', 'accepted delta')

WalkResult = collections.namedtuple('WalkResult', 'world delta accepted proposed')


def make_rng(seed=0, chain=0):
    """Independent, reproducible stream number ``chain`` for ``seed``."""
    return numpy.random.default_rng(numpy.random.SeedSequence(seed, spawn_key=(chain,)))


class Proposer(object):
    """Base class for proposal distributions.

    ``propose(world, rng)`` returns a Proposal whose delta changes hidden
    fields only, and whose log proposal probabilities are both finite.
    A proposer must be able to reach every world of non-zero probability
    from every other; nothing checks this.
    """
    symmetric = False

    def propose(self, world, rng):
        raise NotImplementedError


class UniformProposer(Proposer):
    """Pick one hidden variable uniformly, then a value uniformly from its
    domain (the current value included)."""
    symmetric = True

    def __init__(self, refs=None):
        self.refs = list(refs) if refs is not None else None

    def candidates(self, world, rng):
        return self.refs if self.refs is not None else world.hidden_refs()

    def propose(self, world, rng):
        return propose_uniform(world, self.candidates(world, rng), rng)


def propose_uniform(world, refs, rng):
    """Uniform variable from ``refs``, then a uniform value from its domain.
    Forward and backward probabilities are equal."""
    if not refs:
        raise ValueError("There are no hidden variables to propose changes to")
    ref = refs[int(rng.integers(len(refs)))]
    domain = world.domain_of(ref)
    value = domain[int(rng.integers(len(domain)))]
    log_q = -math.log(len(refs)) - math.log(len(domain))
    return Proposal(Delta.for_update(world, ref, value), log_q, log_q)


def check_proposal(world, proposal):
    delta = proposal.delta
    if not (math.isfinite(proposal.log_q_forward) and math.isfinite(proposal.log_q_backward)):
        raise ContractViolation("Proposal log probabilities must be finite, got %r and %r"
                % (proposal.log_q_forward, proposal.log_q_backward))
    if set(delta.minus) != set(delta.plus):
        raise ContractViolation("Proposals may update fields but not insert or delete tuples")
    observed = [r for r in delta.changed_refs(world) if not world.is_hidden(r)]
    if observed:
        raise ContractViolation("Proposal changes observed fields: %s" % observed)


def mh_step(world, spec, proposer, rng):
    proposal = proposer.propose(world, rng)
    check_proposal(world, proposal)
    ratio = log_score_ratio(spec, world, proposal.delta)
    log_alpha = min(0.0, ratio + proposal.log_q_backward - proposal.log_q_forward)
    # one uniform per proposal, even when the move is certain
    u = rng.random()
    if u < math.exp(log_alpha):
        world.apply(proposal.delta)
        return StepResult(True, proposal.delta)
    return StepResult(False, None)


def random_walk(world, spec, proposer, rng, k):
    if k < 1:
        raise ValueError("A random walk needs at least one step, not %r" % (k,))
    delta = Delta()
    accepted = 0
    for _ in range(k):
        step = mh_step(world, spec, proposer, rng)
        if step.accepted:
            accepted += 1
            delta.compose(step.delta)
    return WalkResult(world, delta, accepted, k)


def burn_in(world, spec, proposer, rng, walks, k):
    """Run and discard ``walks`` walks of ``k`` steps."""
    accepted = proposed = 0
    for _ in range(walks):
        result = random_walk(world, spec, proposer, rng, k)
        accepted += result.accepted
        proposed += result.proposed
    if walks:
        logger.debug("burn-in: %d walks, %d of %d proposals accepted", walks, accepted, proposed)
    return world


def chain_marginals(world, spec, proposer, rng, n_samples, k, burn_in_walks=0, refs=None):
    """Per-variable value frequencies over ``n_samples`` thinned samples.
    The entry world (after burn-in) is the first sample."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1, not %r" % (n_samples,))
    burn_in(world, spec, proposer, rng, burn_in_walks, k)
    if refs is None:
        refs = list(world.hidden_refs())
    counts = dict((ref, dict((v, 0) for v in world.domain_of(ref))) for ref in refs)
    accepted = 0
    for i in range(n_samples):
        if i:
            accepted += random_walk(world, spec, proposer, rng, k).accepted
        for ref in refs:
            counts[ref][world.value(ref)] += 1
    logger.debug("chain_marginals: %d samples, %d of %d proposals accepted",
                 n_samples, accepted, (n_samples - 1) * k)
    return dict((ref, dict((v, c / float(n_samples)) for v, c in counts[ref].items()))
                for ref in refs)
