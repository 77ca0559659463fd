"""The relational store. A World holds exactly one possible world: every
relation is a map from primary key to a full tuple, and hidden fields carry
the current value of their random variable.

Differences between worlds are Deltas: the tuples as they were (``minus``)
and as they are now (``plus``), keyed by (relation, primary key).
"""

import collections
import csv
import hashlib
import io

import six

from .schema import (ContractViolation, CorruptionError, Domain, DomainField,
    IntField, ParseError, Schema, SchemaError, TextField, MCMCDBError)


BIO_LABELS = ('B-PER', 'I-PER', 'B-ORG', 'I-ORG', 'B-LOC', 'I-LOC',
              'B-MISC', 'I-MISC', 'O')

TOKEN_COLUMNS = ('TOK_ID', 'DOC_ID', 'STRING', 'TRUTH')

SNAPSHOT_HEADER = ('mcmcdb-snapshot', '1')


VariableRef = collections.namedtuple('VariableRef', 'relation key attribute')


def token_schema(labels=BIO_LABELS, name='TOKEN'):
    bio = Domain(labels, name='bio')
    return Schema(name, [
        IntField('TOK_ID'),
        IntField('DOC_ID'),
        TextField('STRING'),
        DomainField('LABEL', domain=bio, hidden=True),
        DomainField('TRUTH', domain=bio),
    ], 'TOK_ID')


class Relation(object):
    """Rows of one relation keyed by primary key, plus hash indexes on
    attribute tuples built on first use and kept current by set_row."""
    def __init__(self, schema):
        self.schema = schema
        self.rows = {}
        self._indexes = {}

    def __len__(self):
        return len(self.rows)

    def __contains__(self, key):
        return key in self.rows

    def copy(self):
        new = Relation(self.schema)
        new.rows = self.rows.copy()
        return new

    def index(self, attributes):
        attributes = tuple(attributes)
        try:
            return self._indexes[attributes]
        except KeyError:
            pass
        positions = [self.schema.index(a) for a in attributes]
        idx = {}
        for key, row in six.iteritems(self.rows):
            idx.setdefault(tuple(row[p] for p in positions), {})[key] = None
        self._indexes[attributes] = idx
        return idx

    def set_row(self, key, row):
        old = self.rows.get(key)
        for attributes, idx in six.iteritems(self._indexes):
            positions = [self.schema.index(a) for a in attributes]
            if old is not None:
                old_value = tuple(old[p] for p in positions)
                if row is not None and tuple(row[p] for p in positions) == old_value:
                    continue
                bucket = idx[old_value]
                del bucket[key]
                if not bucket:
                    del idx[old_value]
            if row is not None:
                idx.setdefault(tuple(row[p] for p in positions), {})[key] = None
        if row is None:
            del self.rows[key]
        else:
            self.rows[key] = row


class World(object):
    def __init__(self, schemas=()):
        self.relations = {}
        self.tuples_read = 0
        self.cache = {}
        self._hidden_refs = None
        for schema in schemas:
            self.add_relation(schema)

    def __repr__(self):
        return "World(%s)" % ", ".join(
            "%s[%d]" % (name, len(r)) for name, r in six.iteritems(self.relations))

    def __len__(self):
        return sum(len(r) for r in self.relations.values())

    def __eq__(self, other):
        if not isinstance(other, World):
            return NotImplemented
        if list(self.relations) != list(other.relations):
            return False
        return all(self.relations[n].schema == other.relations[n].schema and
                   self.relations[n].rows == other.relations[n].rows
                   for n in self.relations)

    def __ne__(self, other):
        eq = self.__eq__(other)
        return eq if eq is NotImplemented else not eq

    __hash__ = object.__hash__

    def add_relation(self, schema):
        if schema.name in self.relations:
            raise SchemaError("Relation %s already defined" % schema.name)
        self.relations[schema.name] = Relation(schema)
        self._structure_changed()
        return self.relations[schema.name]

    @property
    def schemas(self):
        return dict((name, r.schema) for name, r in six.iteritems(self.relations))

    def relation(self, name):
        try:
            return self.relations[name]
        except KeyError:
            raise SchemaError("No such relation '%s'" % name)

    def schema(self, name):
        return self.relation(name).schema

    def match_relation(self, name):
        if name in self.relations:
            return name
        candidates = [n for n in self.relations if n.upper() == name.upper()]
        if len(candidates) == 1:
            return candidates[0]
        return None

    def insert(self, relation, values):
        r = self.relation(relation)
        row = r.schema.make_row(values)
        key = r.schema.key_of(row)
        if key in r.rows:
            raise SchemaError("Duplicate key %r in relation %s" % (key, relation))
        r.set_row(key, row)
        self._structure_changed()
        return key

    def keys(self, relation):
        return list(self.relation(relation).rows)

    def get(self, relation, key):
        r = self.relation(relation)
        try:
            row = r.rows[key]
        except KeyError:
            raise SchemaError("No tuple with key %r in relation %s" % (key, relation))
        self.tuples_read += 1
        return row

    def scan(self, relation):
        r = self.relation(relation)
        for row in list(r.rows.values()):
            self.tuples_read += 1
            yield row

    def index(self, relation, attributes):
        return self.relation(relation).index(attributes)

    def lookup(self, relation, attributes, values):
        r = self.relation(relation)
        keys = r.index(attributes).get(tuple(values), ())
        rows = [r.rows[k] for k in keys]
        self.tuples_read += len(rows)
        return rows

    def value(self, ref):
        r = self.relation(ref.relation)
        try:
            row = r.rows[ref.key]
        except KeyError:
            raise SchemaError("Unknown variable %s: no tuple with key %r" % (ref, ref.key))
        return row[r.schema.index(ref.attribute)]

    def is_hidden(self, ref):
        return self.schema(ref.relation).field(ref.attribute).hidden

    def domain_of(self, ref):
        return self.schema(ref.relation).field(ref.attribute).domain

    def hidden_refs(self):
        """Every hidden variable, in relation order then insertion order."""
        if self._hidden_refs is None:
            refs = []
            for name, r in six.iteritems(self.relations):
                hidden = [f.name for f in r.schema.hidden_fields]
                if not hidden:
                    continue
                for key in r.rows:
                    refs.extend(VariableRef(name, key, a) for a in hidden)
            self._hidden_refs = refs
        return self._hidden_refs

    def update_field(self, ref, value):
        delta = Delta.for_update(self, ref, value)
        self.apply(delta)
        return delta

    def apply(self, delta):
        for (relation, key), row in six.iteritems(delta.minus):
            r = self.relation(relation)
            if r.rows.get(key) != row:
                raise CorruptionError("Delta does not match world: %s key %r is %r, delta removes %r"
                        % (relation, key, r.rows.get(key), row))
        for (relation, key) in delta.plus:
            if (relation, key) not in delta.minus and key in self.relation(relation).rows:
                raise CorruptionError("Delta inserts existing key %r into %s" % (key, relation))
        for (relation, key) in delta.minus:
            if (relation, key) not in delta.plus:
                self.relations[relation].set_row(key, None)
                self._structure_changed()
        for (relation, key), row in six.iteritems(delta.plus):
            if (relation, key) not in delta.minus:
                self._structure_changed()
            self.relations[relation].set_row(key, row)
        return self

    def revert(self, delta):
        return self.apply(delta.inverse())

    def clone(self):
        new = World()
        for name, r in six.iteritems(self.relations):
            new.relations[name] = r.copy()
        new.cache = self.cache.copy()
        return new

    def _structure_changed(self):
        # Pattern caches depend on which keys exist, never on hidden values.
        self._hidden_refs = None
        self.cache.clear()

    def fingerprint(self):
        h = hashlib.sha1()
        for name, r in six.iteritems(self.relations):
            h.update(repr(name).encode('utf-8'))
            for key in sorted(r.rows):
                h.update(repr(r.rows[key]).encode('utf-8'))
        return h.hexdigest()


class Delta(object):
    """Coalesced difference between two worlds.

    ``minus`` maps (relation, key) to the tuple as it was, ``plus`` to the
    tuple as it is. A key on both sides is an update; composing deltas
    drops any key whose tuple ends up where it started.
    """
    def __init__(self, minus=None, plus=None):
        self.minus = dict(minus or {})
        self.plus = dict(plus or {})

    @classmethod
    def for_update(cls, world, ref, value):
        schema = world.schema(ref.relation)
        field = schema.field(ref.attribute)
        if not field.hidden:
            raise ContractViolation("%s.%s is observed and cannot change" %
                    (ref.relation, ref.attribute))
        value = field.normalize(value)
        try:
            old = world.relations[ref.relation].rows[ref.key]
        except KeyError:
            raise SchemaError("Unknown variable %s: no tuple with key %r" % (ref, ref.key))
        new = schema.replace(old, ref.attribute, value)
        return cls({(ref.relation, ref.key): old}, {(ref.relation, ref.key): new})

    def __repr__(self):
        return "Delta(minus=%r, plus=%r)" % (self.minus, self.plus)

    def __len__(self):
        return len(set(self.minus) | set(self.plus))

    def __bool__(self):
        return bool(self.minus or self.plus)
    __nonzero__ = __bool__

    def __eq__(self, other):
        if not isinstance(other, Delta):
            return NotImplemented
        return self.minus == other.minus and self.plus == other.plus

    def __ne__(self, other):
        eq = self.__eq__(other)
        return eq if eq is NotImplemented else not eq

    __hash__ = None

    def copy(self):
        return Delta(self.minus, self.plus)

    def inverse(self):
        return Delta(self.plus, self.minus)

    def compose(self, other):
        """Fold ``other`` (which applies after self) into self, in place."""
        for k, row in six.iteritems(other.minus):
            if k in self.plus:
                if self.plus[k] != row:
                    raise CorruptionError("Deltas do not chain: %r is %r, next delta removes %r"
                            % (k, self.plus[k], row))
                del self.plus[k]
            elif k in self.minus:
                raise CorruptionError("Deltas do not chain: %r removed twice" % (k,))
            else:
                self.minus[k] = row
        for k, row in six.iteritems(other.plus):
            self.plus[k] = row
        for k in set(other.minus) | set(other.plus):
            if k in self.minus and k in self.plus and self.minus[k] == self.plus[k]:
                del self.minus[k]
                del self.plus[k]
        return self

    def removed(self, relation):
        return [row for (r, _), row in six.iteritems(self.minus) if r == relation]

    def added(self, relation):
        return [row for (r, _), row in six.iteritems(self.plus) if r == relation]

    def relations(self):
        return set(r for r, _ in self.minus) | set(r for r, _ in self.plus)

    def changed_refs(self, world):
        """VariableRefs whose value differs between the two sides. Inserted
        or deleted tuples report every attribute."""
        refs = []
        for k in sorted(set(self.minus) | set(self.plus), key=repr):
            relation, key = k
            names = world.schema(relation).field_names
            old, new = self.minus.get(k), self.plus.get(k)
            for i, name in enumerate(names):
                if old is None or new is None or old[i] != new[i]:
                    refs.append(VariableRef(relation, key, name))
        return refs


def update_field(world, ref, value):
    return world.update_field(ref, value)


def compose_deltas(d1, d2):
    return d1.copy().compose(d2)


def apply_delta(world, delta):
    return world.apply(delta)


def revert_delta(world, delta):
    return world.revert(delta)


def clone_world(world):
    return world.clone()


def ingest_tokens(path, schema=None):
    """Read a tab separated token corpus (TOK_ID, DOC_ID, STRING, TRUTH)
    into a World. A first line naming those columns is skipped. LABEL
    starts as "O" everywhere."""
    if schema is None:
        schema = token_schema()
    world = World([schema])
    initial = 'O' if 'O' in schema.field('LABEL').domain else schema.field('LABEL').domain[0]
    with io.open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.reader(f, delimiter='\t', quoting=csv.QUOTE_NONE)
        for row in reader:
            lineno = reader.line_num
            if not row or row == ['']:
                continue
            if lineno == 1 and tuple(c.strip().upper() for c in row) == TOKEN_COLUMNS:
                continue
            if len(row) != len(TOKEN_COLUMNS):
                raise ParseError("expected %d tab separated fields, found %d" %
                        (len(TOKEN_COLUMNS), len(row)), lineno=lineno, source=path)
            tok_id, doc_id, string, truth = row
            try:
                world.insert(schema.name, {
                    'TOK_ID': schema.field('TOK_ID').from_text(tok_id),
                    'DOC_ID': schema.field('DOC_ID').from_text(doc_id),
                    'STRING': string,
                    'LABEL': initial,
                    'TRUTH': schema.field('TRUTH').from_text(truth),
                })
            except MCMCDBError as e:
                raise ParseError(e.args[0], lineno=lineno, source=path)
    return world


def write_tokens(rows, path):
    with io.open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, delimiter='\t', quoting=csv.QUOTE_NONE,
                lineterminator='\n')
        writer.writerow(TOKEN_COLUMNS)
        for row in rows:
            writer.writerow(row)


def write_snapshot(world, path):
    """Versioned line format: a header line, then for each relation a
    ``relation`` line, its ``field`` lines and its ``row`` lines."""
    with io.open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, delimiter='\t', lineterminator='\n')
        writer.writerow(SNAPSHOT_HEADER)
        for name, r in six.iteritems(world.relations):
            writer.writerow(['relation', name, r.schema.unique_key])
            for field in r.schema.fields:
                writer.writerow(['field'] + field.describe())
            for key in sorted(r.rows):
                writer.writerow(['row'] + r.schema.row_to_text(r.rows[key]))


def read_snapshot(path):
    world = World()
    pending = None

    def finish():
        if pending is not None:
            name, unique_key, fields, rows = pending
            try:
                schema = Schema(name, fields, unique_key)
                world.add_relation(schema)
            except SchemaError as e:
                raise ParseError(e.args[0], lineno=rows[0][0] if rows else None, source=path)
            for lineno, cells in rows:
                try:
                    world.insert(name, schema.row_from_text(cells))
                except MCMCDBError as e:
                    raise ParseError(e.args[0], lineno=lineno, source=path)

    with io.open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.reader(f, delimiter='\t')
        header = next(reader, None)
        if header is None or tuple(header) != SNAPSHOT_HEADER:
            raise ParseError("not an mcmcdb snapshot (expected header %s)" %
                    "\\t".join(SNAPSHOT_HEADER), lineno=1, source=path)
        for cells in reader:
            lineno = reader.line_num
            if not cells:
                continue
            kind, rest = cells[0], cells[1:]
            if kind == 'relation':
                finish()
                if len(rest) != 2:
                    raise ParseError("relation line needs a name and a key", lineno=lineno, source=path)
                pending = (rest[0], rest[1], [], [])
            elif pending is None:
                raise ParseError("%s line before any relation" % kind, lineno=lineno, source=path)
            elif kind == 'field':
                pending[2].append(_field_from_description(rest, lineno, path))
            elif kind == 'row':
                pending[3].append((lineno, rest))
            else:
                raise ParseError("unknown line kind '%s'" % kind, lineno=lineno, source=path)
        finish()
    return world


def _field_from_description(cells, lineno, path):
    if len(cells) < 3 or cells[2] not in ('hidden', 'observed'):
        raise ParseError("malformed field line", lineno=lineno, source=path)
    name, type_name, hidden = cells[0], cells[1], cells[2] == 'hidden'
    try:
        if type_name == 'domain':
            if len(cells) < 6:
                raise ParseError("domain field %s lists no values" % name, lineno=lineno, source=path)
            values = cells[5:]
            if cells[4] == 'int':
                values = [int(v) for v in values]
            return DomainField(name, domain=Domain(values, name=cells[3] or None), hidden=hidden)
        if type_name == 'int':
            return IntField(name, hidden=hidden)
        if type_name == 'text':
            return TextField(name, hidden=hidden)
    except (SchemaError, ValueError) as e:
        raise ParseError("field %s: %s" % (name, e.args[0]), lineno=lineno, source=path)
    raise ParseError("field %s: type %s undefined" % (name, type_name), lineno=lineno, source=path)


def load_world(path):
    """A snapshot, or failing that a token corpus."""
    with io.open(path, 'r', encoding='utf-8', newline='') as f:
        first = f.readline()
    if first.rstrip('\r\n').split('\t') == list(SNAPSHOT_HEADER):
        return read_snapshot(path)
    return ingest_tokens(path)
