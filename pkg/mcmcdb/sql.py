"""Query text.

A small SQL dialect, enough for selections, projections, self-joins,
counts and the per-group count comparison::

    SELECT [DISTINCT] * | column, ... | COUNT(*)
    FROM relation [alias], ...
    [WHERE term AND term ...]
    [GROUP BY column, ...]

A term is ``column op literal`` or ``column op column`` with op one of
``=``, ``!=`` and ``<>``, or the correlated count comparison::

    (SELECT COUNT(*) FROM TOKEN T1 WHERE T1.LABEL='B-PER' AND T.DOC_ID=T1.DOC_ID)
      = (SELECT COUNT(*) FROM TOKEN T1 WHERE T1.LABEL='B-ORG' AND T.DOC_ID=T1.DOC_ID)

Literals are single-quoted strings ('' escapes a quote) or integers.
Keywords are case-insensitive. Syntax errors raise ParseError with the
character offset of the problem.
"""

import pyparsing as pp

from .query import (And, Attr, Compare, CountAll, CountEqFilter, GroupCount,
    Join, Product, Project, Scan, Select, validate)
from .schema import ParseError


class ColumnRef(object):
    def __init__(self, name, position):
        self.name = name
        self.position = position
        if '.' in name:
            self.qualifier, self.attribute = name.split('.', 1)
        else:
            self.qualifier, self.attribute = None, name

    def __repr__(self):
        return "ColumnRef(%r)" % self.name


class Literal(object):
    def __init__(self, value, position):
        self.value = value
        self.position = position

    def __repr__(self):
        return "Literal(%r)" % (self.value,)


class CountStar(object):
    def __init__(self, position):
        self.position = position

    def __repr__(self):
        return "COUNT(*)"


class Comparison(object):
    def __init__(self, left, op, right, position):
        self.left = left
        self.op = op
        self.right = right
        self.position = position

    def __repr__(self):
        return "Comparison(%r %s %r)" % (self.left, self.op, self.right)

    def columns(self):
        if isinstance(self.right, ColumnRef):
            return [self.left, self.right]
        return [self.left]


class FromItem(object):
    def __init__(self, relation, alias, position):
        self.relation = relation
        self.alias = alias
        self.position = position

    @property
    def qualifier(self):
        return self.alias or self.relation


class SubCount(object):
    def __init__(self, table, terms, position):
        self.table = table
        self.terms = terms
        self.position = position


class CountEquality(object):
    def __init__(self, left, right, position):
        self.left = left
        self.right = right
        self.position = position


class Statement(object):
    def __init__(self, distinct, columns, tables, terms, group_by, position):
        self.distinct = distinct
        self.columns = columns
        self.tables = tables
        self.terms = terms
        self.group_by = group_by
        self.position = position


class Conjunction(object):
    def __init__(self, terms):
        self.terms = terms


def _build_grammar():
    SELECT, DISTINCT, FROM, WHERE, AND, GROUP, BY, COUNT = [
        pp.CaselessKeyword(k) for k in
        ('SELECT', 'DISTINCT', 'FROM', 'WHERE', 'AND', 'GROUP', 'BY', 'COUNT')]
    keyword = SELECT | DISTINCT | FROM | WHERE | AND | GROUP | BY | COUNT
    LPAR, RPAR, COMMA, STAR = [pp.Suppress(c) for c in "(),*"]

    identifier = ~keyword + pp.Regex(r"[A-Za-z_][A-Za-z0-9_]*")
    column = (~keyword + pp.Regex(r"[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)?")) \
        .set_parse_action(lambda s, loc, t: ColumnRef(t[0], loc))
    string = pp.QuotedString("'", esc_quote="''")
    integer = pp.Regex(r"-?[0-9]+").set_parse_action(lambda t: int(t[0]))
    literal = (string | integer).set_parse_action(lambda s, loc, t: Literal(t[0], loc))
    op = pp.one_of("= != <>")

    count_star = (pp.Suppress(COUNT) + LPAR + STAR + RPAR) \
        .set_parse_action(lambda s, loc, t: CountStar(loc))
    table = (identifier + pp.Opt(identifier)) \
        .set_parse_action(lambda s, loc, t: FromItem(t[0], t[1] if len(t) > 1 else None, loc))

    conjunction = pp.Forward()
    subcount = (LPAR + pp.Suppress(SELECT) + pp.Suppress(count_star) + pp.Suppress(FROM) +
                table + pp.Suppress(WHERE) + conjunction + RPAR) \
        .set_parse_action(lambda s, loc, t: SubCount(t[0], t[1].terms, loc))
    count_equality = (subcount + pp.Suppress('=') + subcount) \
        .set_parse_action(lambda s, loc, t: CountEquality(t[0], t[1], loc))
    comparison = (column + op + (literal | column)) \
        .set_parse_action(lambda s, loc, t: Comparison(t[0], t[1], t[2], loc))
    term = count_equality | comparison
    conjunction <<= (term + pp.ZeroOrMore(pp.Suppress(AND) + term)) \
        .set_parse_action(lambda t: Conjunction(list(t)))

    select_item = count_star | column
    select_list = pp.Literal('*') | (select_item + pp.ZeroOrMore(COMMA + select_item))
    statement = (pp.Suppress(SELECT) + pp.Opt(DISTINCT)('distinct') +
                 pp.Group(select_list)('columns') + pp.Suppress(FROM) +
                 pp.Group(table + pp.ZeroOrMore(COMMA + table))('tables') +
                 pp.Opt(pp.Suppress(WHERE) + conjunction) +
                 pp.Opt(pp.Suppress(GROUP) + pp.Suppress(BY) +
                        pp.Group(column + pp.ZeroOrMore(COMMA + column))('group_by')) +
                 pp.Opt(pp.Suppress(';')))
    return statement.set_parse_action(_statement)


def _statement(s, loc, t):
    # the WHERE clause is the only Conjunction among the statement tokens
    where = [item for item in t if isinstance(item, Conjunction)]
    return Statement(
        bool(t.get('distinct')), list(t['columns']), list(t['tables']),
        where[0].terms if where else [],
        list(t['group_by']) if 'group_by' in t else [], loc)


grammar = _build_grammar()


def parse_statement(text):
    if not text or not text.strip():
        raise ParseError("Empty query", position=0)
    try:
        return grammar.parse_string(text, parse_all=True)[0]
    except pp.ParseBaseException as e:
        raise ParseError("Syntax error: %s" % e.msg, position=e.loc)


def parse(text):
    """Query AST for ``text``. The result still has to be validated
    against the relation schemas."""
    return Translator(parse_statement(text)).query()


def compile_query(text, schemas):
    """Parse and validate: returns a Plan."""
    return validate(parse(text), schemas)


def _compare(term, attribute):
    """A Compare on ``attribute`` (a rewritten column name) from a parsed
    comparison."""
    if isinstance(term.right, ColumnRef):
        value = Attr(term.right.name, term.right.position)
    else:
        value = term.right.value
    return Compare(attribute, term.op, value, position=term.left.position)


class Translator(object):
    """Turns a parsed Statement into relational algebra: single-relation
    terms are pushed down to their scans, column equalities between two
    relations become equi-join keys, and everything else filters the
    joined result."""
    def __init__(self, statement):
        self.statement = statement

    def error(self, message, position):
        raise ParseError(message, position=position)

    def query(self):
        s = self.statement
        count_equalities = [t for t in s.terms if isinstance(t, CountEquality)]
        if count_equalities:
            return self.count_equality_query(count_equalities)
        if s.distinct:
            self.error("DISTINCT is supported only for count comparison queries", s.position)
        node = self.joined()
        return self.select_list(node)

    def owner(self, column, qualifiers):
        if column.qualifier is None:
            return 0 if len(qualifiers) == 1 else None
        try:
            return qualifiers[column.qualifier.upper()]
        except KeyError:
            self.error("Unknown relation or alias '%s'" % column.qualifier, column.position)

    def qualifiers(self):
        qualifiers = {}
        for i, t in enumerate(self.statement.tables):
            q = t.qualifier.upper()
            if q in qualifiers:
                self.error("Relation or alias '%s' appears twice in FROM" % t.qualifier,
                           t.position)
            qualifiers[q] = i
        return qualifiers

    def joined(self):
        tables = self.statement.tables
        qualifiers = self.qualifiers()
        pushed = [[] for _ in tables]
        join_terms = []
        residual = []
        for term in self.statement.terms:
            owners = [self.owner(c, qualifiers) for c in term.columns()]
            if None in owners:
                residual.append(term)
            elif len(set(owners)) == 1:
                pushed[owners[0]].append(term)
            elif term.op == '=':
                join_terms.append((term, owners[0], owners[1]))
            else:
                residual.append(term)

        def scan(i):
            node = Scan(tables[i].relation, tables[i].alias, position=tables[i].position)
            if pushed[i]:
                node = Select(node, And(*[_compare(t, t.left.name) for t in pushed[i]]))
            return node

        node = scan(0)
        included = set([0])
        for i in range(1, len(tables)):
            pairs = []
            for term, a, b in join_terms:
                if a == i and b in included:
                    pairs.append((term.right.name, term.left.name))
                elif b == i and a in included:
                    pairs.append((term.left.name, term.right.name))
            right = scan(i)
            node = Join(node, right, pairs) if pairs else Product(node, right)
            node.position = tables[i].position
            included.add(i)
        if residual:
            node = Select(node, And(*[_compare(t, t.left.name) for t in residual]))
        return node

    def select_list(self, node):
        s = self.statement
        columns = s.columns
        if columns == ['*']:
            if s.group_by:
                self.error("SELECT * cannot be grouped", s.position)
            return node
        counts = [c for c in columns if isinstance(c, CountStar)]
        names = [c.name for c in columns if isinstance(c, ColumnRef)]
        if s.group_by:
            group = [c.name for c in s.group_by]
            if len(counts) != 1 or not isinstance(columns[-1], CountStar) or \
                    [n.upper() for n in names] != [g.upper() for g in group]:
                self.error("A grouped query selects its GROUP BY columns followed by COUNT(*)",
                           s.group_by[0].position)
            q = GroupCount(node, group)
        elif counts:
            if len(columns) != 1:
                self.error("COUNT(*) without GROUP BY must be the only selected column",
                           counts[0].position)
            q = CountAll(node)
        else:
            q = Project(node, names)
        q.position = columns[0].position
        return q

    def count_equality_query(self, count_equalities):
        s = self.statement
        if len(count_equalities) > 1:
            self.error("Only one count comparison is supported", count_equalities[1].position)
        if len(s.tables) != 1:
            self.error("A count comparison query reads exactly one relation", s.position)
        if len(s.terms) != 1:
            self.error("A count comparison cannot be combined with other conditions", s.position)
        if s.group_by:
            self.error("A count comparison query cannot be grouped", s.group_by[0].position)
        outer = s.tables[0]
        if len(s.columns) != 1 or not isinstance(s.columns[0], ColumnRef):
            self.error("A count comparison query selects the single column it correlates on",
                       s.position)
        selected = s.columns[0]
        if selected.qualifier is not None and selected.qualifier.upper() != outer.qualifier.upper():
            self.error("Unknown relation or alias '%s'" % selected.qualifier, selected.position)
        ce = count_equalities[0]
        left_group, left = self.subcount(ce.left, outer)
        right_group, right = self.subcount(ce.right, outer)
        if not (left_group.upper() == right_group.upper() == selected.attribute.upper()):
            self.error("Both counts must be correlated on the selected column %s"
                       % selected.attribute, ce.position)
        q = CountEqFilter(Scan(outer.relation, outer.alias, position=outer.position),
                          selected.attribute, left, right, distinct=s.distinct)
        q.position = ce.position
        return q

    def subcount(self, sub, outer):
        """The correlation attribute of a COUNT(*) subquery and the
        predicate on the counted rows."""
        if sub.table.relation.upper() != outer.relation.upper():
            self.error("A count subquery must read the outer relation %s" % outer.relation,
                       sub.table.position)
        outer_q = outer.qualifier.upper()
        inner_q = sub.table.qualifier.upper()
        if outer_q == inner_q:
            self.error("A count subquery needs an alias different from the outer query's",
                       sub.table.position)
        group = None
        terms = []
        for term in sub.terms:
            if not isinstance(term, Comparison):
                self.error("Count comparisons cannot be nested", term.position)
            qualifiers = [c.qualifier.upper() if c.qualifier else inner_q for c in term.columns()]
            if outer_q in qualifiers:
                if term.op != '=' or len(qualifiers) != 2 or set(qualifiers) != set([outer_q, inner_q]):
                    self.error("The outer relation may appear only in the correlation "
                               "equality", term.position)
                if term.left.attribute.upper() != term.right.attribute.upper():
                    self.error("The correlation must equate the same attribute on both sides",
                               term.position)
                if group is not None:
                    self.error("A count subquery has exactly one correlation equality",
                               term.position)
                group = term.left.attribute
                continue
            for c, q in zip(term.columns(), qualifiers):
                if q != inner_q:
                    self.error("Unknown relation or alias '%s'" % c.qualifier, c.position)
            compare = _compare(term, term.left.attribute)
            if isinstance(compare.value, Attr):
                compare.value = Attr(term.right.attribute, term.right.position)
            terms.append(compare)
        if group is None:
            self.error("A count subquery must be correlated with the outer relation", sub.position)
        return group, And(*terms)

