"""Factor graphs over a World.

A template pairs a neighbor pattern, which picks tuples of VariableRefs out
of a World, with feature functions and weights. Factors are never stored:
patterns instantiate them on demand, and every score is a log score so that
a factor with psi = 0 is simply ``-inf``.
"""

import collections
import itertools
import math

import numpy
import six

from .schema import (ContractViolation, DomainError, SchemaError,
    StateSpaceError)
from .world import VariableRef


NEG_INF = float('-inf')

FactorInstance = collections.namedtuple('FactorInstance', 'template refs')


def _text_key(values):
    return tuple(six.text_type(v) for v in values)


def starts_uppercase(value):
    return isinstance(value, six.string_types) and value[:1].isupper()


class NeighborPattern(object):
    """Selects neighbor tuples from a World. ``attributes`` name the fields
    taken from each matched tuple; the remaining parameters are structural
    and must name observed fields, so the factor structure never changes
    while hidden values do."""
    name = None
    tuples_per_factor = 1

    def __init__(self, relation, attributes, **params):
        if isinstance(attributes, six.string_types):
            attributes = attributes.split()
        if not attributes:
            raise SchemaError("%s pattern needs at least one attribute" % self.name)
        self.relation = relation
        self.attributes = tuple(attributes)
        self.params = params

    def __repr__(self):
        return "%s(%s, %s)" % (self.__class__.__name__, self.relation, list(self.attributes))

    @property
    def arity(self):
        return self.tuples_per_factor * len(self.attributes)

    def structural_attributes(self):
        return []

    def resolve(self, schemas):
        try:
            schema = schemas[self.relation]
        except KeyError:
            raise SchemaError("Pattern %s names unknown relation %s" % (self.name, self.relation))
        schema.check_fields(self.attributes)
        structural = [a for a in self.structural_attributes() if a is not None]
        schema.check_fields(structural)
        hidden = [a for a in structural if schema.field(a).hidden]
        if hidden:
            raise SchemaError("Pattern %s cannot group or match on hidden fields %s" %
                    (self.name, hidden))
        return [schema.field(a) for a in self.attributes] * self.tuples_per_factor

    def refs_for(self, *keys):
        return tuple(VariableRef(self.relation, key, a)
                     for key in keys for a in self.attributes)

    def instances(self, world):
        raise NotImplementedError

    def touching(self, world, ref):
        raise NotImplementedError


class TuplePattern(NeighborPattern):
    name = 'tuple'

    def instances(self, world):
        for key in world.keys(self.relation):
            yield self.refs_for(key)

    def touching(self, world, ref):
        if ref.relation != self.relation or ref.attribute not in self.attributes:
            return []
        return [self.refs_for(ref.key)]


class SequencePattern(NeighborPattern):
    """Consecutive tuples of a group, ordered by ``order`` (default: the
    primary key)."""
    name = 'sequence'
    tuples_per_factor = 2

    def __init__(self, relation, attributes, group=None, order=None, **params):
        super(SequencePattern, self).__init__(relation, attributes, **params)
        self.group = group
        self.order = order

    def structural_attributes(self):
        return [self.group, self.order]

    def _chains(self, world):
        cache_key = ('sequence', self.relation, self.group, self.order)
        try:
            return world.cache[cache_key]
        except KeyError:
            pass
        r = world.relation(self.relation)
        schema = r.schema
        order = schema.index(self.order or schema.unique_key)
        groups = {}
        for key, row in six.iteritems(r.rows):
            g = row[schema.index(self.group)] if self.group else None
            groups.setdefault(g, []).append((row[order], key))
        chains, positions = {}, {}
        for g, members in six.iteritems(groups):
            members.sort()
            chains[g] = [key for _, key in members]
            for i, key in enumerate(chains[g]):
                positions[key] = (g, i)
        world.cache[cache_key] = (chains, positions)
        return chains, positions

    def instances(self, world):
        chains, _ = self._chains(world)
        for g in sorted(chains, key=repr):
            chain = chains[g]
            for a, b in zip(chain, chain[1:]):
                yield self.refs_for(a, b)

    def touching(self, world, ref):
        if ref.relation != self.relation or ref.attribute not in self.attributes:
            return []
        chains, positions = self._chains(world)
        try:
            g, i = positions[ref.key]
        except KeyError:
            return []
        chain = chains[g]
        found = []
        if i > 0:
            found.append(self.refs_for(chain[i-1], ref.key))
        if i + 1 < len(chain):
            found.append(self.refs_for(ref.key, chain[i+1]))
        return found


class SameValuePattern(NeighborPattern):
    """Unordered pairs of tuples whose ``match`` attribute is equal,
    optionally within one group and only for values starting with an
    uppercase letter. This is the skip edge of a skip-chain model."""
    name = 'same_value'
    tuples_per_factor = 2

    def __init__(self, relation, attributes, match=None, group=None,
                 uppercase_only=False, **params):
        super(SameValuePattern, self).__init__(relation, attributes, **params)
        if not match:
            raise SchemaError("same_value pattern needs a match attribute")
        self.match = match
        self.group = group
        self.uppercase_only = uppercase_only in (True, 'true', '1')

    def structural_attributes(self):
        return [self.match, self.group]

    @property
    def index_attributes(self):
        if self.group:
            return (self.group, self.match)
        return (self.match,)

    def _eligible(self, index_value):
        return not self.uppercase_only or starts_uppercase(index_value[-1])

    def instances(self, world):
        idx = world.index(self.relation, self.index_attributes)
        for value in sorted(idx, key=repr):
            if not self._eligible(value):
                continue
            for a, b in itertools.combinations(sorted(idx[value]), 2):
                yield self.refs_for(a, b)

    def touching(self, world, ref):
        if ref.relation != self.relation or ref.attribute not in self.attributes:
            return []
        r = world.relation(self.relation)
        row = r.rows.get(ref.key)
        if row is None:
            return []
        value = tuple(row[r.schema.index(a)] for a in self.index_attributes)
        if not self._eligible(value):
            return []
        found = []
        for other in sorted(r.index(self.index_attributes).get(value, ())):
            if other == ref.key:
                continue
            pair = (ref.key, other) if ref.key < other else (other, ref.key)
            found.append(self.refs_for(*pair))
        return found


neighbor_patterns = {
    'tuple': TuplePattern,
    'sequence': SequencePattern,
    'same_value': SameValuePattern,
}


def indicator(values, params):
    """One feature per joint assignment, named by the assigned values."""
    return {_text_key(values): 1.0}


def agreement(values, params):
    """Fires when every slot carries the same value. With ``per_value``
    the feature is named by that value as well."""
    first = values[0]
    if all(v == first for v in values[1:]):
        if params.get('per_value') in (True, 'true', '1'):
            return {('agree', six.text_type(first)): 1.0}
        return {('agree',): 1.0}
    return {}


def zero(values, params):
    return {}


feature_functions = {
    'indicator': indicator,
    'agreement': agreement,
    'zero': zero,
}


def all_equal(values, params):
    return all(v == values[0] for v in values[1:])


def all_different(values, params):
    return len(set(values)) == len(values)


def forbid(values, params):
    forbidden = params.get('values', ())
    if isinstance(forbidden, six.string_types):
        forbidden = forbidden.split()
    forbidden = set(six.text_type(v) for v in forbidden)
    return not any(six.text_type(v) in forbidden for v in values)


constraints = {
    'all_equal': all_equal,
    'all_different': all_different,
    'forbid': forbid,
}


class FactorTemplate(object):
    """Log-linear factor template: log psi = sum of feature value times
    weight, weights keyed by feature name. Features without a weight
    contribute 0."""
    constraint = False

    def __init__(self, name, pattern, features=('indicator',), weights=None, params=None):
        self.name = name
        self.pattern = pattern
        self.params = dict(params or {})
        self.features = []
        for f in features:
            if callable(f):
                self.features.append(f)
                continue
            try:
                self.features.append(feature_functions[f])
            except KeyError:
                raise SchemaError("Unknown feature function '%s' in template %s" % (f, name))
        self.weights = {}
        for key, w in six.iteritems(weights or {}):
            if isinstance(key, six.string_types):
                key = tuple(key.split())
            w = float(w)
            if not math.isfinite(w):
                raise SchemaError("Weight %s of template %s is not finite" % (key, name))
            self.weights[_text_key(key)] = w
        self.slot_fields = None

    def __repr__(self):
        return "%s(%r, %r)" % (self.__class__.__name__, self.name, self.pattern)

    @property
    def arity(self):
        return self.pattern.arity

    def bind(self, schemas):
        self.slot_fields = self.pattern.resolve(schemas)

    def check_assignment(self, values):
        if len(values) != self.arity:
            raise DomainError("Template %s takes %d values, got %d" %
                    (self.name, self.arity, len(values)))
        if self.slot_fields is None:
            return
        for field, v in zip(self.slot_fields, values):
            if field.domain is not None and v not in field.domain:
                raise DomainError("%r is not in domain %s of %s (template %s)" %
                        (v, field.domain.name or list(field.domain), field.name, self.name))

    def feature_vector(self, values):
        vector = {}
        for f in self.features:
            for key, value in six.iteritems(f(values, self.params)):
                vector[key] = vector.get(key, 0.0) + value
        return vector

    def log_score(self, values):
        return math.fsum(value * self.weights.get(key, 0.0)
                         for key, value in six.iteritems(self.feature_vector(values)))


class ConstraintTemplate(FactorTemplate):
    """Deterministic factor: psi is 1 when the constraint holds and 0 when
    it is violated."""
    constraint = True

    def __init__(self, name, pattern, constraint, params=None):
        super(ConstraintTemplate, self).__init__(name, pattern, features=(), params=params)
        if callable(constraint):
            self.check = constraint
        else:
            try:
                self.check = constraints[constraint]
            except KeyError:
                raise SchemaError("Unknown constraint '%s' in template %s" % (constraint, name))

    def log_score(self, values):
        return 0.0 if self.check(values, self.params) else NEG_INF


class FactorGraphSpec(object):
    """Templates bound to relation schemas. The hidden declarations are the
    hidden fields of those schemas, each with its Domain.

    ``factors_scored`` counts factor evaluations; it is the only state that
    changes after construction."""
    def __init__(self, templates, schemas):
        if not hasattr(schemas, 'items'):
            schemas = dict((s.name, s) for s in schemas)
        self.schemas = dict(schemas)
        self.templates = list(templates)
        names = [t.name for t in self.templates]
        if len(set(names)) != len(names):
            raise SchemaError("Duplicate template names: %s" % names)
        for t in self.templates:
            t.bind(self.schemas)
        self.factors_scored = 0

    def __repr__(self):
        return "FactorGraphSpec(%s)" % [t.name for t in self.templates]

    @property
    def hidden_declarations(self):
        return [VariableDeclaration(name, f.name, f.domain)
                for name, schema in sorted(self.schemas.items())
                for f in schema.hidden_fields]

    def template(self, name):
        for t in self.templates:
            if t.name == name:
                return t
        raise SchemaError("No template named %s" % name)

    def check_world(self, world):
        for name, schema in six.iteritems(self.schemas):
            if world.relations.get(name) is None:
                raise SchemaError("World has no relation %s" % name)
            if world.schema(name) != schema:
                raise SchemaError("World relation %s does not match the model's schema" % name)

    def instances(self, world):
        for t in self.templates:
            for refs in t.pattern.instances(world):
                yield FactorInstance(t, refs)


VariableDeclaration = collections.namedtuple('VariableDeclaration', 'relation attribute domain')


def factor_log_score(template, assignment):
    values = tuple(assignment)
    template.check_assignment(values)
    return template.log_score(values)


def _sum_log(scores):
    if any(s == NEG_INF for s in scores):
        return NEG_INF
    return math.fsum(scores)


def world_log_score(spec, world):
    scores = []
    for inst in spec.instances(world):
        scores.append(factor_log_score(inst.template, [world.value(r) for r in inst.refs]))
    spec.factors_scored += len(scores)
    return _sum_log(scores)


def touched_factors(spec, world, changed):
    found = collections.OrderedDict()
    for t in spec.templates:
        for ref in changed:
            for refs in t.pattern.touching(world, ref):
                found.setdefault(FactorInstance(t, refs), None)
    return list(found)


def _values_after(world, delta, refs):
    values = []
    for ref in refs:
        row = delta.plus.get((ref.relation, ref.key))
        if row is None:
            values.append(world.value(ref))
        else:
            values.append(row[world.schema(ref.relation).index(ref.attribute)])
    return values


def log_score_ratio(spec, world, delta):
    """log pi(w') - log pi(w) for w' = w + delta, scoring only the factors
    the delta touches. ``world`` is left as it is. Leaving an impossible
    world for a possible one gives ``+inf``."""
    if not delta:
        return 0.0
    if set(delta.minus) != set(delta.plus):
        raise ContractViolation("Score ratios are defined for field updates only, "
                "not tuple inserts or deletes")
    changed = delta.changed_refs(world)
    observed = [r for r in changed if not world.is_hidden(r)]
    if observed:
        raise ContractViolation("Delta changes observed fields %s" % observed)
    old_scores, new_scores = [], []
    for inst in touched_factors(spec, world, changed):
        old_scores.append(factor_log_score(inst.template, [world.value(r) for r in inst.refs]))
        new_scores.append(factor_log_score(inst.template, _values_after(world, delta, inst.refs)))
    spec.factors_scored += len(old_scores) + len(new_scores)
    old, new = _sum_log(old_scores), _sum_log(new_scores)
    if new == NEG_INF:
        return NEG_INF
    if old == NEG_INF:
        return float('inf')
    return new - old


class ExactDistribution(object):
    """The normalized distribution over every possible world of a small
    model, worlds being assignments to ``refs``. Impossible worlds are
    left out."""
    def __init__(self, world, refs, assignments, probabilities):
        self.world = world
        self.refs = refs
        self.assignments = assignments
        self.probabilities = probabilities

    def __len__(self):
        return len(self.assignments)

    def __getitem__(self, assignment):
        return self.as_dict()[tuple(assignment)]

    def items(self):
        return zip(self.assignments, self.probabilities)

    def as_dict(self):
        return dict(self.items())

    def marginal(self, ref):
        i = self.refs.index(ref)
        result = dict((v, 0.0) for v in self.world.domain_of(ref))
        for assignment, p in self.items():
            result[assignment[i]] += p
        return result

    def marginals(self):
        return dict((ref, self.marginal(ref)) for ref in self.refs)

    def worlds(self):
        """Yield (world, probability); the world is one working copy that
        is rewritten between iterations."""
        working = self.world.clone()
        for assignment, p in self.items():
            _assign(working, self.refs, assignment)
            yield working, p


def _assign(world, refs, assignment):
    for ref, value in zip(refs, assignment):
        if world.value(ref) != value:
            world.update_field(ref, value)


def exact_distribution(spec, world, cap=10**6):
    refs = list(world.hidden_refs())
    domains = [list(world.domain_of(r)) for r in refs]
    size = 1
    for d in domains:
        size *= len(d)
        if size > cap:
            raise StateSpaceError("State space has more than %d worlds (cap %d); "
                    "the exact oracle is only for small models" % (size, cap))
    working = world.clone()
    assignments, logs = [], []
    for assignment in itertools.product(*domains):
        _assign(working, refs, assignment)
        score = world_log_score(spec, working)
        if score != NEG_INF:
            assignments.append(assignment)
            logs.append(score)
    if not assignments:
        raise StateSpaceError("Every world violates a constraint; the distribution is empty")
    logs = numpy.array(logs)
    weights = numpy.exp(logs - logs.max())
    probabilities = (weights / weights.sum()).tolist()
    return ExactDistribution(world.clone(), refs, assignments, probabilities)
