import collections
import math

import pytest

from .factors import (ConstraintTemplate, FactorGraphSpec, FactorTemplate,
    NEG_INF, SameValuePattern, SequencePattern, TuplePattern, agreement,
    exact_distribution, factor_log_score, indicator, log_score_ratio,
    touched_factors, world_log_score)
from .ner import SKIP_CHAIN_WEIGHTS, SkipChainOptions, build_skip_chain_spec
from .sampler import make_rng, propose_uniform
from .schema import (ContractViolation, Domain, DomainError, DomainField,
    IntField, Schema, SchemaError, StateSpaceError)
from .world import Delta, VariableRef, World, token_schema

from .test_incremental import random_delta, random_world
from .test_world import fixture_world, label, make_token_world


def skip_chain(options=None):
    return build_skip_chain_spec(SKIP_CHAIN_WEIGHTS, options=options)


def count_instances(spec, world):
    return collections.Counter(inst.template.name for inst in spec.instances(world))


ab = Domain(['a', 'b'], name='ab')

coin_schema = Schema('V', [IntField('ID'), IntField('G'),
                           DomainField('X', domain=ab, hidden=True)], 'ID')


def coin_world(rows=((1, 1, 'a'), (2, 1, 'a'), (3, 2, 'a'))):
    world = World([coin_schema])
    for row in rows:
        world.insert('V', row)
    return world


def coin_spec(prior=math.log(2), pair=1.0):
    """Each X prefers a by a factor of 2; consecutive X of one G prefer
    to agree by a factor of e."""
    return FactorGraphSpec([
        FactorTemplate('prior', TuplePattern('V', ['X']), ['indicator'], {'a': prior}),
        FactorTemplate('pair', SequencePattern('V', ['X'], group='G'), ['agreement'],
                       {'agree': pair}),
    ], [coin_schema])


def x(key):
    return VariableRef('V', key, 'X')


class TestPatterns(object):
    def setup_method(self):
        self.world = fixture_world()
        self.spec = skip_chain()

    def test_single_token_document(self):
        world = make_token_world([(1, 1, 'IBM', 'O')])
        assert count_instances(self.spec, world) == {'emission': 1, 'bias': 1}

    def test_fixture_counts(self):
        counts = count_instances(self.spec, self.world)
        assert counts['emission'] == 8
        assert counts['bias'] == 8
        assert counts['transition'] == 6
        assert counts['skip'] == 1

    def test_transition_follows_key_order_within_documents(self):
        pattern = self.spec.template('transition').pattern
        pairs = [tuple(r.key for r in refs) for refs in pattern.instances(self.world)]
        assert pairs == [(1, 2), (2, 3), (3, 4), (4, 5), (6, 7), (7, 8)]

    def test_skip_scope(self):
        world = make_token_world([
            (1, 1, 'IBM', 'O'), (2, 1, 'the', 'O'),
            (3, 2, 'IBM', 'O'), (4, 2, 'the', 'O'),
        ])
        assert count_instances(skip_chain(), world)['skip'] == 0
        corpus = skip_chain(SkipChainOptions(scope='corpus'))
        assert count_instances(corpus, world)['skip'] == 1
        every_string = skip_chain(SkipChainOptions(scope='corpus', uppercase_only=False))
        assert count_instances(every_string, world)['skip'] == 2

    def test_touching(self):
        touched = touched_factors(self.spec, self.world, [label(3)])
        assert sorted(inst.template.name for inst in touched) == \
            ['bias', 'emission', 'transition', 'transition']
        touched = touched_factors(self.spec, self.world, [label(1)])
        assert sorted(inst.template.name for inst in touched) == \
            ['bias', 'emission', 'skip', 'transition']
        assert len(touched_factors(self.spec, self.world, [label(8)])) == 3

    def test_touching_two_neighbours_counts_shared_factor_once(self):
        touched = touched_factors(self.spec, self.world, [label(3), label(4)])
        transitions = [inst for inst in touched if inst.template.name == 'transition']
        assert len(transitions) == 3

    def test_observed_fields_touch_nothing(self):
        ref = VariableRef('TOKEN', 3, 'STRING')
        assert self.spec.template('skip').pattern.touching(self.world, ref) == []

    def test_pattern_on_hidden_group_is_refused(self):
        pattern = SequencePattern('TOKEN', ['LABEL'], group='LABEL')
        with pytest.raises(SchemaError):
            pattern.resolve({'TOKEN': token_schema()})

    def test_same_value_needs_match(self):
        with pytest.raises(SchemaError):
            SameValuePattern('TOKEN', ['LABEL'])

    def test_unknown_relation(self):
        with pytest.raises(SchemaError):
            TuplePattern('WORD', ['LABEL']).resolve({'TOKEN': token_schema()})


def test_indicator_and_agreement():
    assert indicator(('IBM', 'B-ORG'), {}) == {('IBM', 'B-ORG'): 1.0}
    assert agreement(('B-ORG', 'B-ORG'), {}) == {('agree',): 1.0}
    assert agreement(('B-ORG', 'O'), {}) == {}
    assert agreement(('O', 'O'), {'per_value': 'true'}) == {('agree', 'O'): 1.0}


class TestTemplates(object):
    def setup_method(self):
        self.spec = skip_chain()
        self.emission = self.spec.template('emission')

    def test_log_score(self):
        assert factor_log_score(self.emission, ['IBM', 'B-ORG']) == 3.0
        assert factor_log_score(self.emission, ['IBM', 'I-LOC']) == 0.0

    def test_wrong_arity(self):
        with pytest.raises(DomainError):
            factor_log_score(self.emission, ['B-ORG'])

    def test_value_outside_domain(self):
        with pytest.raises(DomainError):
            factor_log_score(self.emission, ['IBM', 'B-CITY'])

    def test_non_finite_weight(self):
        with pytest.raises(SchemaError):
            FactorTemplate('t', TuplePattern('TOKEN', ['LABEL']), weights={'O': float('inf')})

    def test_unknown_feature_function(self):
        with pytest.raises(SchemaError):
            FactorTemplate('t', TuplePattern('TOKEN', ['LABEL']), features=['cosine'])

    def test_unknown_template(self):
        with pytest.raises(SchemaError):
            self.spec.template('trigram')

    def test_duplicate_template_names(self):
        t1 = FactorTemplate('t', TuplePattern('TOKEN', ['LABEL']))
        t2 = FactorTemplate('t', TuplePattern('TOKEN', ['LABEL']))
        with pytest.raises(SchemaError):
            FactorGraphSpec([t1, t2], [token_schema()])


class TestScoreRatio(object):
    def setup_method(self):
        self.world = fixture_world()
        self.spec = skip_chain()

    def test_ratio_matches_full_score_difference(self):
        rng = make_rng(7)
        refs = self.world.hidden_refs()
        for i in range(200):
            delta = propose_uniform(self.world, refs, rng).delta
            before = world_log_score(self.spec, self.world)
            fingerprint = self.world.fingerprint()
            ratio = log_score_ratio(self.spec, self.world, delta)
            assert self.world.fingerprint() == fingerprint
            self.world.apply(delta)
            after = world_log_score(self.spec, self.world)
            assert ratio == pytest.approx(after - before, abs=1e-9)
            if i % 3 == 0:
                self.world.revert(delta)

    def test_skip_edge_rewards_agreement(self):
        self.world.update_field(label(1), 'B-ORG')
        delta = Delta.for_update(self.world, label(5), 'B-ORG')
        # emission 3.0 and agreement 2.0 gained, bias 1.5 and transition 0.5 lost
        assert log_score_ratio(self.spec, self.world, delta) == pytest.approx(3.0)

    def test_empty_delta(self):
        assert log_score_ratio(self.spec, self.world, Delta()) == 0.0

    def test_inserts_are_refused(self):
        delta = Delta(plus={('TOKEN', 9): (9, 2, 'x', 'O', 'O')})
        with pytest.raises(ContractViolation):
            log_score_ratio(self.spec, self.world, delta)

    def test_ratio_counts_only_touched_factors(self):
        self.spec.factors_scored = 0
        log_score_ratio(self.spec, self.world, Delta.for_update(self.world, label(3), 'B-PER'))
        assert self.spec.factors_scored == 8

    def test_constraints(self):
        spec = FactorGraphSpec([
            ConstraintTemplate('no_inside', TuplePattern('TOKEN', ['LABEL']), 'forbid',
                               params={'values': 'I-PER I-ORG'}),
            FactorTemplate('bias', TuplePattern('TOKEN', ['LABEL']), weights={'O': 1.0}),
        ], [token_schema()])
        delta = Delta.for_update(self.world, label(2), 'I-PER')
        assert log_score_ratio(spec, self.world, delta) == NEG_INF
        self.world.apply(delta)
        assert world_log_score(spec, self.world) == NEG_INF
        back = Delta.for_update(self.world, label(2), 'O')
        assert log_score_ratio(spec, self.world, back) == float('inf')


class TestExactDistribution(object):
    def test_marginals(self):
        dist = exact_distribution(coin_spec(), coin_world())
        assert len(dist) == 8
        assert sum(p for _, p in dist.items()) == pytest.approx(1.0)
        e = math.e
        assert dist.marginal(x(1))['a'] == pytest.approx((4*e + 2) / (5*e + 4))
        assert dist.marginal(x(3))['a'] == pytest.approx(2.0 / 3)
        assert set(dist.marginals()) == set([x(1), x(2), x(3)])

    def test_world_is_untouched(self):
        world = coin_world()
        fingerprint = world.fingerprint()
        exact_distribution(coin_spec(), world)
        assert world.fingerprint() == fingerprint

    def test_worlds(self):
        dist = exact_distribution(coin_spec(), coin_world())
        seen = [tuple(w.value(x(k)) for k in (1, 2, 3)) for w, _ in dist.worlds()]
        assert sorted(seen) == sorted(dist.assignments)

    def test_impossible_worlds_are_left_out(self):
        spec = FactorGraphSpec([
            ConstraintTemplate('same', SequencePattern('V', ['X'], group='G'), 'all_equal'),
        ], [coin_schema])
        dist = exact_distribution(spec, coin_world())
        assert len(dist) == 4
        assert dist[('a', 'a', 'b')] == pytest.approx(0.25)

    def test_every_world_impossible(self):
        spec = FactorGraphSpec([
            ConstraintTemplate('none', TuplePattern('V', ['X']), 'forbid', params={'values': 'a b'}),
        ], [coin_schema])
        with pytest.raises(StateSpaceError):
            exact_distribution(spec, coin_world())

    def test_cap(self):
        with pytest.raises(StateSpaceError):
            exact_distribution(skip_chain(), fixture_world(), cap=1000)


def test_ratio_on_random_worlds_and_multi_field_deltas():
    spec = skip_chain(SkipChainOptions(scope='corpus', uppercase_only=False))
    rng = make_rng(23)
    pairs = 0
    for _ in range(100):
        world = random_world(rng, max_tokens=12)
        before = world_log_score(spec, world)
        for _ in range(100):
            delta = random_delta(world, rng, max_size=4)
            ratio = log_score_ratio(spec, world, delta)
            world.apply(delta)
            assert ratio == pytest.approx(world_log_score(spec, world) - before, abs=1e-9)
            world.revert(delta)
            pairs += 1
    assert pairs == 10 ** 4


def test_zero_feature_changes_nothing():
    spec = coin_spec()
    padded = FactorGraphSpec(coin_spec().templates + [
        FactorTemplate('nothing', TuplePattern('V', ['X']), ['zero'], {'a': 5.0}),
        FactorTemplate('nothing_pairs', SequencePattern('V', ['X'], group='G'), ['zero']),
    ], [coin_schema])
    world = coin_world()
    assert world_log_score(padded, world) == world_log_score(spec, world)
    rng = make_rng(3)
    for _ in range(50):
        delta = propose_uniform(world, world.hidden_refs(), rng).delta
        assert log_score_ratio(padded, world, delta) == log_score_ratio(spec, world, delta)
        world.apply(delta)
    assert exact_distribution(padded, coin_world()).as_dict() == \
        pytest.approx(exact_distribution(spec, coin_world()).as_dict())


def test_agreement_of_two_variables():
    spec = FactorGraphSpec([
        FactorTemplate('pair', SequencePattern('V', ['X'], group='G'), ['agreement'],
                       {'agree': math.log(2)}),
    ], [coin_schema])
    dist = exact_distribution(spec, coin_world(rows=((1, 1, 'a'), (2, 1, 'b'))))
    assert dist.as_dict() == pytest.approx({
        ('a', 'a'): 1.0 / 3, ('b', 'b'): 1.0 / 3,
        ('a', 'b'): 1.0 / 6, ('b', 'a'): 1.0 / 6,
    })
