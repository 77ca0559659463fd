"""View maintenance: answering a query on w' from its answer on w and the
delta between the two worlds.

Every operator has a delta rule producing a signed bag (tuple -> non-zero
count change):

- scan: +1 for each tuple in ``delta.plus``, -1 for each in ``delta.minus``
- select and project: applied to the child's change
- join and product: ``dL x R + L x dR + dL x dR`` with L and R the
  inputs as they were, kept materialized and hash-indexed by the session
- aggregates: the changed rows adjust per-group counters; only groups
  with a changed row are re-emitted, old row out and new row in

A ViewMaintainer is one such session, owning the materialized inputs and
group counters of one query over one chain's world.
"""

import logging

import six

from .query import (AggregatePlan, JoinPlan, MultisetAnswer, ProjectPlan,
    ScanPlan, SelectPlan, add_into, validate)
from .schema import CorruptionError

logger = logging.getLogger(__name__)


class AnswerDelta(object):
    def __init__(self, removals=None, additions=None):
        self.removals = removals if isinstance(removals, MultisetAnswer) else MultisetAnswer(removals)
        self.additions = additions if isinstance(additions, MultisetAnswer) else MultisetAnswer(additions)

    def __repr__(self):
        return "AnswerDelta(removals=%r, additions=%r)" % (self.removals.counts, self.additions.counts)

    def __bool__(self):
        return bool(self.removals.counts or self.additions.counts)
    __nonzero__ = __bool__

    def __eq__(self, other):
        if not isinstance(other, AnswerDelta):
            return NotImplemented
        return self.removals == other.removals and self.additions == other.additions

    def __ne__(self, other):
        eq = self.__eq__(other)
        return eq if eq is NotImplemented else not eq

    __hash__ = None

    @classmethod
    def from_signed(cls, bag):
        removals, additions = {}, {}
        for t, n in six.iteritems(bag):
            if n < 0:
                removals[t] = -n
            elif n > 0:
                additions[t] = n
        return cls(removals, additions)

    def inverse(self):
        return AnswerDelta(self.additions.copy(), self.removals.copy())


def maintain(answer, d):
    """``answer - d.removals + d.additions`` as a new MultisetAnswer."""
    result = answer.copy()
    apply_answer_delta(result, d)
    return result


def apply_answer_delta(answer, d):
    for t, n in d.removals.items():
        if answer[t] < n:
            raise CorruptionError("Answer delta removes %d of %r but the answer holds %d"
                    % (n, t, answer[t]))
    for t, n in list(d.removals.items()):
        answer.remove(t, n)
    for t, n in d.additions.items():
        answer.add(t, n)
    return answer


def check_delta(world, delta, applied=False):
    """The rows ``delta`` claims for ``world``: its minus side when the
    delta is still to be applied, its plus side when it already has been."""
    expected = delta.plus if applied else delta.minus
    other = delta.minus if applied else delta.plus
    for (relation, key), row in six.iteritems(expected):
        r = world.relations.get(relation)
        have = r.rows.get(key) if r is not None else None
        if have != row:
            raise CorruptionError("Delta is inconsistent with the world: %s key %r is %r, "
                    "delta has %r" % (relation, key, have, row))
    for (relation, key) in other:
        if (relation, key) not in expected:
            r = world.relations.get(relation)
            if r is not None and key in r.rows:
                raise CorruptionError("Delta is inconsistent with the world: %s key %r "
                        "should not exist" % (relation, key))


def _scan_delta(session, node, delta, pending):
    changes = {}
    removed = delta.removed(node.relation)
    added = delta.added(node.relation)
    session.world.tuples_read += len(removed) + len(added)
    for row in removed:
        add_into(changes, row, -1)
    for row in added:
        add_into(changes, row, 1)
    return changes


def _select_delta(session, node, delta, pending):
    return node.filter(session.delta_of(node.child, delta, pending))


def _project_delta(session, node, delta, pending):
    return node.map(session.delta_of(node.child, delta, pending))


def _join_delta(session, node, delta, pending):
    d_left = session.delta_of(node.left, delta, pending)
    d_right = session.delta_of(node.right, delta, pending)
    old_left, old_right = session.state[node.node_id]
    out = {}
    if d_left:
        node.combine(d_left, old_right, out)
    if d_right:
        for r, cr in six.iteritems(d_right):
            for l, cl in six.iteritems(old_left.get(node.right_key(r), {})):
                add_into(out, l + r, cl * cr)
    if d_left and d_right:
        node.combine(d_left, node.index(d_right, 'right'), out)

    def commit():
        for bag, idx, key in ((d_left, old_left, node.left_key),
                              (d_right, old_right, node.right_key)):
            for t, n in six.iteritems(bag):
                k = key(t)
                bucket = idx.setdefault(k, {})
                add_into(bucket, t, n)
                if bucket.get(t, 0) < 0:
                    raise CorruptionError("Materialized join input went negative for %r" % (t,))
                if not bucket:
                    del idx[k]
    pending.append(commit)
    return out


def _aggregate_delta(session, node, delta, pending):
    d_child = session.delta_of(node.child, delta, pending)
    groups = session.state[node.node_id]
    changed = {}
    for t, n in six.iteritems(d_child):
        g = node.group_of(t)
        current = changed.get(g)
        if current is None:
            current = groups.counts.get(g, node.zero())
        changed[g] = tuple(c + n * x for c, x in zip(current, node.contribution(t)))
    out = {}
    for g, new in six.iteritems(changed):
        if any(c < 0 for c in new):
            raise CorruptionError("Group %r count went negative: %r" % (g, new))
        old = groups.counts.get(g, node.zero())
        for t, n in six.iteritems(node.output(g, old)):
            add_into(out, t, -n)
        for t, n in six.iteritems(node.output(g, new)):
            add_into(out, t, n)
    groups.last_touched = set(changed)
    groups.touched += len(changed)

    def commit():
        for g, new in six.iteritems(changed):
            if any(new) or g == ():
                groups.counts[g] = new
            else:
                groups.counts.pop(g, None)
    pending.append(commit)
    return out


delta_rules = [
    (ScanPlan, _scan_delta),
    (SelectPlan, _select_delta),
    (ProjectPlan, _project_delta),
    (JoinPlan, _join_delta),
    (AggregatePlan, _aggregate_delta),
]


class ViewMaintainer(object):
    """A maintenance session for one query over one world.

    On construction the join inputs and aggregate counters are
    materialized from ``world``, which must be the world the first delta
    starts from. ``with_answer`` also runs the full query once, the only
    full execution the session ever does. ``groups`` supplies aggregate
    counters cached by an earlier session over the same world.
    """
    def __init__(self, query, world, with_answer=True, groups=None):
        self.plan = validate(query, world)
        self.world = world
        self.state = {}
        self.deltas_applied = 0
        self.materialize(self.plan.root, groups)
        self.answer = self.plan.execute(world) if with_answer else None

    def __repr__(self):
        return "ViewMaintainer(%r)" % (self.plan,)

    def materialize(self, node, groups=None):
        if isinstance(node, JoinPlan):
            self.state[node.node_id] = (node.index(node.left.evaluate(self.world), 'left'),
                                        node.index(node.right.evaluate(self.world), 'right'))
        elif isinstance(node, AggregatePlan):
            self.state[node.node_id] = groups if groups is not None else node.groups(self.world)
        for child in node.children:
            self.materialize(child)

    @property
    def groups(self):
        if isinstance(self.plan.root, AggregatePlan):
            return self.state[self.plan.root.node_id]
        return None

    def delta_of(self, node, delta, pending):
        for cls, rule in delta_rules:
            if isinstance(node, cls):
                return rule(self, node, delta, pending)
        raise TypeError("No delta rule for %r" % (node,))

    def delta(self, delta):
        """The AnswerDelta for ``delta``; the session moves on to the
        world after it."""
        pending = []
        signed = self.delta_of(self.plan.root, delta, pending)
        for commit in pending:
            commit()
        self.deltas_applied += 1
        return AnswerDelta.from_signed(signed)

    def update(self, delta):
        """Advance by ``delta`` and maintain the answer in place."""
        d = self.delta(delta)
        if self.answer is not None and d:
            apply_answer_delta(self.answer, d)
        return d

    def check(self, world=None):
        """Compare the maintained answer with a full execution."""
        expected = self.plan.execute(world or self.world)
        if expected != self.answer:
            raise CorruptionError("Maintained answer diverged from full execution after %d "
                    "deltas: maintained %r, executed %r" %
                    (self.deltas_applied, self.answer.counts, expected.counts))
        return True


def delta_execute(query, prev_world, delta):
    """Q'(w, delta): the change to ``query``'s answer when ``delta`` moves
    ``prev_world`` to the next world. ``prev_world`` is not modified."""
    check_delta(prev_world, delta)
    if not delta:
        validate(query, prev_world)
        return AnswerDelta()
    return ViewMaintainer(query, prev_world, with_answer=False).delta(delta)


def delta_aggregate(query, prev_world, delta, prev_groups=None):
    """Delta of an aggregate query, maintaining ``prev_groups`` (a
    GroupCounts from an earlier call or session) in place. Only groups
    holding a changed tuple are re-emitted."""
    check_delta(prev_world, delta)
    session = ViewMaintainer(query, prev_world, with_answer=False, groups=prev_groups)
    if session.groups is None:
        raise ValueError("delta_aggregate needs an aggregate query, not %r" % (query,))
    return session.delta(delta)
