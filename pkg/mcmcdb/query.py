"""Relational algebra over a World with bag semantics.

Queries are trees of Scan, Select, Project, Product, Join and the
aggregates CountAll, GroupCount and CountEqFilter. They are built either
with the fluent methods here::

    scan('TOKEN').where(LABEL='B-PER').project('STRING')

or from query text with :func:`mcmcdb.sql.parse`. ``validate`` resolves
every attribute against the relation schemas and returns a Plan; plans
evaluate to MultisetAnswers, never failing half way through a world.
"""

import six

from .schema import CorruptionError, DomainError, QueryValidationError


class Attr(object):
    """A reference to another attribute on the right hand side of a
    comparison."""
    def __init__(self, name, position=None):
        self.name = name
        self.position = position

    def __repr__(self):
        return "Attr(%r)" % self.name

    def __eq__(self, other):
        return isinstance(other, Attr) and self.name == other.name

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return hash(('Attr', self.name))


class Predicate(object):
    def __and__(self, other):
        return And(self, other)

    def terms(self):
        return [self]


class Compare(Predicate):
    ops = ('=', '!=')

    def __init__(self, attribute, op, value, position=None):
        if op == '<>':
            op = '!='
        if op not in self.ops:
            raise ValueError("Unsupported comparison '%s'" % op)
        self.attribute = attribute
        self.op = op
        self.value = value
        self.position = position

    def __repr__(self):
        return "Compare(%r, %r, %r)" % (self.attribute, self.op, self.value)

    def __eq__(self, other):
        return isinstance(other, Compare) and \
            (self.attribute, self.op, self.value) == (other.attribute, other.op, other.value)

    def __ne__(self, other):
        return not self.__eq__(other)

    __hash__ = None


class And(Predicate):
    def __init__(self, *predicates):
        self.predicates = []
        for p in predicates:
            self.predicates.extend(p.terms())

    def __repr__(self):
        return "And(%s)" % ", ".join(repr(p) for p in self.predicates)

    def __eq__(self, other):
        return isinstance(other, And) and self.predicates == other.predicates

    def __ne__(self, other):
        return not self.__eq__(other)

    __hash__ = None

    def terms(self):
        return list(self.predicates)


rel_ops = {'eq': '=', 'ne': '!='}


def where(*args, **kwargs):
    """Build a conjunction from predicates and ``attribute=value`` keywords;
    ``attribute__ne=value`` compares for inequality."""
    terms = list(args)
    for k, v in sorted(kwargs.items()):
        try:
            name, rel = k.rsplit("__", 1)
        except ValueError:
            name, rel = k, 'eq'
        if rel not in rel_ops:
            raise ValueError("No such relation '%s' defined" % rel)
        terms.append(Compare(name, rel_ops[rel], v))
    if not terms:
        raise ValueError("where() needs at least one condition")
    if len(terms) == 1:
        return terms[0]
    return And(*terms)


class Query(object):
    """Base class of query AST nodes, holding the fluent builder."""
    children = ()
    position = None

    def where(self, *args, **kwargs):
        return Select(self, where(*args, **kwargs))

    def project(self, *attributes):
        return Project(self, attributes)

    def product(self, other):
        return Product(self, other)

    def join(self, other, on):
        return Join(self, other, on)

    def count(self):
        return CountAll(self)

    def group_count(self, *attributes):
        return GroupCount(self, attributes)

    def count_eq(self, group, left, right, distinct=False):
        return CountEqFilter(self, group, left, right, distinct=distinct)

    def __mul__(self, other):
        return self.product(other)

    def __eq__(self, other):
        return type(self) is type(other) and self._key() == other._key()

    def __ne__(self, other):
        return not self.__eq__(other)

    __hash__ = None

    def _key(self):
        return ()


class Scan(Query):
    def __init__(self, relation, alias=None, position=None):
        self.relation = relation
        self.alias = alias
        self.position = position

    def __repr__(self):
        if self.alias:
            return "Scan(%r, %r)" % (self.relation, self.alias)
        return "Scan(%r)" % self.relation

    def _key(self):
        return (self.relation, self.alias)


def scan(relation, alias=None):
    return Scan(relation, alias)


class Select(Query):
    def __init__(self, child, predicate):
        self.child = child
        self.predicate = predicate
        self.children = (child,)

    def __repr__(self):
        return "Select(%r, %r)" % (self.child, self.predicate)

    def _key(self):
        return (self.child, self.predicate.terms())


class Project(Query):
    def __init__(self, child, attributes):
        if isinstance(attributes, six.string_types):
            attributes = [attributes]
        self.child = child
        self.attributes = list(attributes)
        self.children = (child,)

    def __repr__(self):
        return "Project(%r, %r)" % (self.child, self.attributes)

    def _key(self):
        return (self.child, self.attributes)


class Product(Query):
    def __init__(self, left, right):
        self.left = left
        self.right = right
        self.children = (left, right)

    def __repr__(self):
        return "Product(%r, %r)" % (self.left, self.right)

    def _key(self):
        return (self.left, self.right)


class Join(Query):
    """Equi-join; ``on`` is a list of (left attribute, right attribute)
    pairs, or one attribute name present on both sides."""
    def __init__(self, left, right, on):
        if isinstance(on, six.string_types):
            on = [(on, on)]
        self.left = left
        self.right = right
        self.on = [tuple(pair) for pair in on]
        self.children = (left, right)

    def __repr__(self):
        return "Join(%r, %r, %r)" % (self.left, self.right, self.on)

    def _key(self):
        return (self.left, self.right, self.on)


class CountAll(Query):
    def __init__(self, child):
        self.child = child
        self.children = (child,)

    def __repr__(self):
        return "CountAll(%r)" % (self.child,)

    def _key(self):
        return (self.child,)


class GroupCount(Query):
    def __init__(self, child, attributes):
        if isinstance(attributes, six.string_types):
            attributes = [attributes]
        self.child = child
        self.attributes = list(attributes)
        self.children = (child,)

    def __repr__(self):
        return "GroupCount(%r, %r)" % (self.child, self.attributes)

    def _key(self):
        return (self.child, self.attributes)


class CountEqFilter(Query):
    """Rows of ``child`` whose group holds as many rows satisfying ``left``
    as rows satisfying ``right``; emits the group value once per such row,
    or once per group when ``distinct``."""
    def __init__(self, child, group, left, right, distinct=False):
        self.child = child
        self.group = group
        self.left = left
        self.right = right
        self.distinct = distinct
        self.children = (child,)

    def __repr__(self):
        return "CountEqFilter(%r, %r, %r, %r, distinct=%r)" % (
            self.child, self.group, self.left, self.right, self.distinct)

    def _key(self):
        return (self.child, self.group, self.left.terms(), self.right.terms(), self.distinct)


aggregate_types = (CountAll, GroupCount, CountEqFilter)


class MultisetAnswer(object):
    """Answer tuples with their positive multiplicities. A tuple is in the
    answer while its count is above zero."""
    def __init__(self, counts=None, columns=None):
        self.columns = list(columns) if columns is not None else None
        self.counts = {}
        for t, n in six.iteritems(dict(counts or {})):
            if n < 0:
                raise CorruptionError("Negative count %d for %r" % (n, t))
            if n:
                self.counts[tuple(t)] = n

    def __repr__(self):
        return "MultisetAnswer(%r)" % self.counts

    def __len__(self):
        return len(self.counts)

    def __iter__(self):
        return iter(self.counts)

    def __contains__(self, t):
        return self.counts.get(tuple(t), 0) > 0

    def __getitem__(self, t):
        return self.counts.get(tuple(t), 0)

    def __eq__(self, other):
        if isinstance(other, MultisetAnswer):
            return self.counts == other.counts
        if isinstance(other, dict):
            return self.counts == dict((tuple(k), v) for k, v in other.items() if v)
        return NotImplemented

    def __ne__(self, other):
        eq = self.__eq__(other)
        return eq if eq is NotImplemented else not eq

    __hash__ = None

    def items(self):
        return self.counts.items()

    def total(self):
        return sum(self.counts.values())

    def copy(self):
        return MultisetAnswer(self.counts, self.columns)

    def add(self, t, n=1):
        if n < 0:
            raise ValueError("add() needs a non-negative count")
        t = tuple(t)
        if n:
            self.counts[t] = self.counts.get(t, 0) + n

    def remove(self, t, n=1):
        if n < 0:
            raise ValueError("remove() needs a non-negative count")
        t = tuple(t)
        have = self.counts.get(t, 0)
        if n > have:
            raise CorruptionError("Cannot remove %d of %r: answer holds %d" % (n, t, have))
        if n == have:
            self.counts.pop(t, None)
        else:
            self.counts[t] = have - n


def add_into(bag, t, n):
    """Signed bag update; zero counts are dropped."""
    n = bag.get(t, 0) + n
    if n:
        bag[t] = n
    else:
        bag.pop(t, None)


class PlanNode(object):
    """A validated operator. ``columns`` are (qualifier, attribute) pairs
    and ``fields`` the schema Field of each column (None for counts)."""
    children = ()

    def __init__(self, node_id, columns, fields):
        self.node_id = node_id
        self.columns = list(columns)
        self.fields = list(fields)

    def evaluate(self, world):
        raise NotImplementedError


class ScanPlan(PlanNode):
    def __init__(self, node_id, relation, columns, fields):
        super(ScanPlan, self).__init__(node_id, columns, fields)
        self.relation = relation

    def evaluate(self, world):
        bag = {}
        for row in world.scan(self.relation):
            bag[row] = bag.get(row, 0) + 1
        return bag


class Condition(object):
    """A compiled conjunction: each term is (position, equal, constant,
    other position)."""
    def __init__(self, terms):
        self.terms = terms

    def __call__(self, row):
        for pos, equal, constant, other in self.terms:
            v = row[other] if other is not None else constant
            if (row[pos] == v) != equal:
                return False
        return True


class SelectPlan(PlanNode):
    def __init__(self, node_id, child, condition):
        super(SelectPlan, self).__init__(node_id, child.columns, child.fields)
        self.child = child
        self.children = (child,)
        self.condition = condition

    def filter(self, bag):
        return dict((t, n) for t, n in six.iteritems(bag) if self.condition(t))

    def evaluate(self, world):
        return self.filter(self.child.evaluate(world))


class ProjectPlan(PlanNode):
    def __init__(self, node_id, child, positions):
        super(ProjectPlan, self).__init__(node_id,
            [child.columns[p] for p in positions], [child.fields[p] for p in positions])
        self.child = child
        self.children = (child,)
        self.positions = positions

    def map(self, bag):
        out = {}
        for t, n in six.iteritems(bag):
            add_into(out, tuple(t[p] for p in self.positions), n)
        return out

    def evaluate(self, world):
        return self.map(self.child.evaluate(world))


class JoinPlan(PlanNode):
    """Hash equi-join; a product when there are no key positions."""
    def __init__(self, node_id, left, right, left_keys, right_keys):
        super(JoinPlan, self).__init__(node_id, left.columns + right.columns,
                                       left.fields + right.fields)
        self.left = left
        self.right = right
        self.children = (left, right)
        self.left_keys = left_keys
        self.right_keys = right_keys

    def left_key(self, row):
        return tuple(row[p] for p in self.left_keys)

    def right_key(self, row):
        return tuple(row[p] for p in self.right_keys)

    def index(self, bag, side):
        key = self.left_key if side == 'left' else self.right_key
        idx = {}
        for t, n in six.iteritems(bag):
            add_into(idx.setdefault(key(t), {}), t, n)
        return idx

    def combine(self, left_bag, right_index, out=None):
        if out is None:
            out = {}
        for l, cl in six.iteritems(left_bag):
            for r, cr in six.iteritems(right_index.get(self.left_key(l), {})):
                add_into(out, l + r, cl * cr)
        return out

    def evaluate(self, world):
        left = self.left.evaluate(world)
        right = self.right.evaluate(world)
        return self.combine(left, self.index(right, 'right'))


class AggregatePlan(PlanNode):
    """Aggregates keep a vector of counts per group; ``contribution`` is
    what one child row adds to its group and ``output`` turns a group's
    counts into answer rows."""
    width = 1

    def __init__(self, node_id, child, columns, fields):
        super(AggregatePlan, self).__init__(node_id, columns, fields)
        self.child = child
        self.children = (child,)

    def group_of(self, row):
        return ()

    def contribution(self, row):
        return (1,)

    def output(self, group, counts):
        raise NotImplementedError

    def zero(self):
        return (0,) * self.width

    def groups(self, world):
        return GroupCounts.from_bag(self, self.child.evaluate(world))

    def answer_bag(self, groups):
        out = {}
        for g, counts in six.iteritems(groups.counts):
            for t, n in six.iteritems(self.output(g, counts)):
                add_into(out, t, n)
        return out

    def evaluate(self, world):
        return self.answer_bag(self.groups(world))


class CountAllPlan(AggregatePlan):
    def output(self, group, counts):
        return {(counts[0],): 1}

    def groups(self, world):
        groups = super(CountAllPlan, self).groups(world)
        groups.counts.setdefault((), self.zero())
        return groups


class GroupCountPlan(AggregatePlan):
    def __init__(self, node_id, child, positions, columns, fields):
        super(GroupCountPlan, self).__init__(node_id, child, columns, fields)
        self.positions = positions

    def group_of(self, row):
        return tuple(row[p] for p in self.positions)

    def output(self, group, counts):
        if counts[0] > 0:
            return {group + (counts[0],): 1}
        return {}


class CountEqFilterPlan(AggregatePlan):
    width = 3

    def __init__(self, node_id, child, position, left, right, distinct, columns, fields):
        super(CountEqFilterPlan, self).__init__(node_id, child, columns, fields)
        self.position = position
        self.left = left
        self.right = right
        self.distinct = distinct

    def group_of(self, row):
        return (row[self.position],)

    def contribution(self, row):
        return (1 if self.left(row) else 0, 1 if self.right(row) else 0, 1)

    def output(self, group, counts):
        left, right, rows = counts
        if rows > 0 and left == right:
            return {group: 1 if self.distinct else rows}
        return {}


class GroupCounts(object):
    """Per-group count vectors of an aggregate, plus the groups the last
    delta touched."""
    def __init__(self, counts=None):
        self.counts = dict(counts or {})
        self.last_touched = set()
        self.touched = 0

    def __repr__(self):
        return "GroupCounts(%r)" % self.counts

    @classmethod
    def from_bag(cls, plan, bag):
        groups = cls()
        for t, n in six.iteritems(bag):
            g = plan.group_of(t)
            current = groups.counts.get(g, plan.zero())
            groups.counts[g] = tuple(c + n * x for c, x in zip(current, plan.contribution(t)))
        return groups

    def copy(self):
        return GroupCounts(self.counts)


class Plan(object):
    def __init__(self, root, query):
        self.root = root
        self.query = query

    def __repr__(self):
        return "Plan(%r)" % (self.query,)

    @property
    def columns(self):
        return self.root.columns

    @property
    def column_names(self):
        names = [a for _, a in self.root.columns]
        if len(set(names)) == len(names):
            return names
        return [("%s.%s" % (q, a)) if q else a for q, a in self.root.columns]

    @property
    def is_aggregate(self):
        return isinstance(self.root, AggregatePlan)

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def execute(self, world):
        return MultisetAnswer(self.root.evaluate(world), self.column_names)


class Validator(object):
    """Walks a query AST, collecting every problem before giving up."""
    def __init__(self, schemas):
        if hasattr(schemas, 'schemas'):
            schemas = schemas.schemas
        self.schemas = dict(schemas)
        self.errors = []
        self.next_id = 0

    def error(self, message, position=None):
        if position is not None:
            message = "%s (position %d)" % (message, position)
        self.errors.append(message)

    def new_id(self):
        self.next_id += 1
        return self.next_id

    def match_relation(self, name):
        if name in self.schemas:
            return name
        candidates = [n for n in self.schemas if n.upper() == name.upper()]
        if len(candidates) == 1:
            return candidates[0]
        return None

    def resolve(self, node, name, position=None):
        """Position of column ``name`` (optionally ``qualifier.name``) in a
        plan node's columns, or None after recording an error."""
        if '.' in name:
            qualifier, attribute = name.split('.', 1)
        else:
            qualifier, attribute = None, name
        matches = []
        for i, (q, a) in enumerate(node.columns):
            if qualifier is not None and (q is None or q.upper() != qualifier.upper()):
                continue
            if a == attribute:
                matches.append(i)
        if not matches:
            matches = [i for i, (q, a) in enumerate(node.columns)
                       if a.upper() == attribute.upper() and
                       (qualifier is None or (q is not None and q.upper() == qualifier.upper()))]
        if len(matches) == 1:
            return matches[0]
        if not matches:
            self.error("Unknown attribute '%s'" % name, position)
        else:
            self.error("Ambiguous attribute '%s'" % name, position)
        return None

    def compile_condition(self, node, predicate):
        terms = []
        ok = True
        for p in predicate.terms():
            if not isinstance(p, Compare):
                self.error("Unsupported predicate %r" % (p,))
                ok = False
                continue
            pos = self.resolve(node, p.attribute, p.position)
            if pos is None:
                ok = False
                continue
            equal = p.op == '='
            if isinstance(p.value, Attr):
                other = self.resolve(node, p.value.name, p.value.position)
                if other is None:
                    ok = False
                    continue
                terms.append((pos, equal, None, other))
                continue
            field = node.fields[pos]
            value = p.value
            if field is not None:
                try:
                    value = field.normalize(value)
                except DomainError as e:
                    self.error("Cannot compare %s with %r: %s" % (p.attribute, p.value, e.args[0]),
                               p.position)
                    ok = False
                    continue
            terms.append((pos, equal, value, None))
        return Condition(terms) if ok else None

    def visit(self, query, top=True):
        if isinstance(query, aggregate_types) and not top:
            self.error("%s must be the outermost operator of a query" %
                       query.__class__.__name__, query.position)
        method = getattr(self, 'visit_%s' % query.__class__.__name__, None)
        if method is None:
            self.error("Unsupported operator %r" % (query,))
            return None
        return method(query)

    def visit_Scan(self, q):
        name = self.match_relation(q.relation)
        if name is None:
            self.error("Unknown relation '%s'" % q.relation, q.position)
            return None
        schema = self.schemas[name]
        qualifier = q.alias or name
        return ScanPlan(self.new_id(), name,
                        [(qualifier, f.name) for f in schema.fields], schema.fields)

    def visit_Select(self, q):
        child = self.visit(q.child, top=False)
        if child is None:
            return None
        condition = self.compile_condition(child, q.predicate)
        if condition is None:
            return None
        return SelectPlan(self.new_id(), child, condition)

    def visit_Project(self, q):
        child = self.visit(q.child, top=False)
        if child is None:
            return None
        if not q.attributes:
            self.error("Projection needs at least one attribute", q.position)
            return None
        positions = [self.resolve(child, a, q.position) for a in q.attributes]
        if None in positions:
            return None
        return ProjectPlan(self.new_id(), child, positions)

    def visit_Product(self, q):
        left = self.visit(q.left, top=False)
        right = self.visit(q.right, top=False)
        if left is None or right is None:
            return None
        return JoinPlan(self.new_id(), left, right, [], [])

    def visit_Join(self, q):
        left = self.visit(q.left, top=False)
        right = self.visit(q.right, top=False)
        if left is None or right is None:
            return None
        if not q.on:
            self.error("Join needs at least one pair of attributes", q.position)
            return None
        left_keys = [self.resolve(left, l, q.position) for l, _ in q.on]
        right_keys = [self.resolve(right, r, q.position) for _, r in q.on]
        if None in left_keys or None in right_keys:
            return None
        return JoinPlan(self.new_id(), left, right, left_keys, right_keys)

    def visit_CountAll(self, q):
        child = self.visit(q.child, top=False)
        if child is None:
            return None
        return CountAllPlan(self.new_id(), child, [(None, 'COUNT')], [None])

    def visit_GroupCount(self, q):
        child = self.visit(q.child, top=False)
        if child is None:
            return None
        positions = [self.resolve(child, a, q.position) for a in q.attributes]
        if None in positions:
            return None
        return GroupCountPlan(self.new_id(), child, positions,
                              [child.columns[p] for p in positions] + [(None, 'COUNT')],
                              [child.fields[p] for p in positions] + [None])

    def visit_CountEqFilter(self, q):
        child = self.visit(q.child, top=False)
        if child is None:
            return None
        position = self.resolve(child, q.group, q.position)
        left = self.compile_condition(child, q.left)
        right = self.compile_condition(child, q.right)
        if position is None or left is None or right is None:
            return None
        return CountEqFilterPlan(self.new_id(), child, position, left, right, q.distinct,
                                 [child.columns[position]], [child.fields[position]])


def validate(query, schemas):
    """Resolve ``query`` against relation schemas (a mapping, or a World).
    Returns a Plan or raises QueryValidationError listing every problem."""
    if isinstance(query, Plan):
        return query
    v = Validator(schemas)
    root = v.visit(query)
    if v.errors or root is None:
        raise QueryValidationError(v.errors or ["Invalid query %r" % (query,)])
    return Plan(root, query)


def execute(query, world):
    return validate(query, world).execute(world)
