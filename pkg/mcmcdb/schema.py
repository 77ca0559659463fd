

import math

import six

try:
    from lxml import etree
except ImportError:
    raise ImportError('mcmcdb requires lxml to read model files')


class MCMCDBError(Exception):
    pass


class SchemaError(MCMCDBError):
    pass


class DomainError(MCMCDBError):
    pass


class CorruptionError(MCMCDBError):
    pass


class ContractViolation(MCMCDBError):
    pass


class StateSpaceError(MCMCDBError):
    pass


class ParseError(MCMCDBError):
    """Raised for malformed corpora, snapshots, model files and query
    text. ``lineno`` is 1-based; ``position`` is a 0-based character
    offset into the query text."""
    def __init__(self, message, lineno=None, position=None, source=None):
        self.message = message
        self.lineno = lineno
        self.position = position
        self.source = source
        where = []
        if source:
            where.append(six.text_type(source))
        if lineno is not None:
            where.append("line %d" % lineno)
        if position is not None:
            where.append("position %d" % position)
        if where:
            message = "%s: %s" % (", ".join(where), message)
        super(ParseError, self).__init__(message)


class QueryValidationError(MCMCDBError):
    def __init__(self, errors):
        self.errors = list(errors)
        super(QueryValidationError, self).__init__(
            "Invalid query:\n %s" % "\n ".join(self.errors))


class Domain(object):
    """An ordered, finite set of scalar values. The order is fixed so that
    drawing an index uniformly gives reproducible values."""
    def __init__(self, values, name=None):
        values = tuple(values)
        if not values:
            raise SchemaError("Domain %s must have at least one value" % (name or ''))
        positions = {}
        for i, v in enumerate(values):
            if not isinstance(v, six.string_types + six.integer_types) or isinstance(v, bool):
                raise SchemaError("Domain values must be strings or integers, not %r" % (v,))
            if v in positions:
                raise SchemaError("Duplicate value %r in domain %s" % (v, name or ''))
            positions[v] = i
        kinds = set(isinstance(v, six.string_types) for v in values)
        if len(kinds) > 1:
            raise SchemaError("Domain %s mixes strings and integers" % (name or ''))
        self.name = name
        self.values = values
        self.kind = 'text' if kinds.pop() else 'int'
        self._positions = positions
        self._text_values = dict((six.text_type(v), v) for v in values)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def __contains__(self, value):
        try:
            return value in self._positions
        except TypeError:
            return False

    def __eq__(self, other):
        if not isinstance(other, Domain):
            return NotImplemented
        return self.values == other.values

    def __ne__(self, other):
        eq = self.__eq__(other)
        return eq if eq is NotImplemented else not eq

    def __hash__(self):
        return hash(self.values)

    def __repr__(self):
        return "Domain(%r)" % (self.values,)

    def index(self, value):
        try:
            return self._positions[value]
        except (KeyError, TypeError):
            raise DomainError("%r is not in domain %s" % (value, self.name or list(self.values)))

    def check(self, value, context=None):
        if value not in self:
            raise DomainError("%r is not in domain %s%s" % (
                value, self.name or list(self.values),
                " (%s)" % context if context else ""))
        return value

    def from_text(self, s):
        try:
            return self._text_values[s]
        except KeyError:
            raise DomainError("%r is not in domain %s" % (s, self.name or list(self.values)))


class Field(object):
    type_name = None

    def __init__(self, name, hidden=False, **kwargs):
        self.name = name
        self.hidden = hidden
        self.domain = None

    def normalize(self, value):
        """ Normalize the given value according to the field type.

        This method does nothing by default, returning the given value
        as is. Child classes may override this method as required.
        """
        return value

    def from_text(self, s):
        return self.normalize(s)

    def to_text(self, value):
        return six.text_type(value)

    def describe(self):
        return [self.name, self.type_name, "hidden" if self.hidden else "observed"]


class TextField(Field):
    type_name = 'text'

    def normalize(self, value):
        if not isinstance(value, six.string_types):
            raise DomainError("%r is not text (field %s)" % (value, self.name))
        return six.text_type(value)


class IntField(Field):
    type_name = 'int'
    min = -(2**63)
    max = 2**63-1

    def normalize(self, value):
        if isinstance(value, float) and not (math.isfinite(value) and value.is_integer()):
            raise DomainError("%s is invalid value for %s (field %s)" %
                    (value, self.__class__.__name__, self.name))
        try:
            v = int(value)
        except (OverflowError, TypeError, ValueError):
            raise DomainError("%s is invalid value for %s (field %s)" %
                    (value, self.__class__.__name__, self.name))
        if v < self.min or v > self.max:
            raise DomainError("%s out of range for a %s (field %s)" %
                    (value, self.__class__.__name__, self.name))
        return v


class DomainField(Field):
    type_name = 'domain'

    def __init__(self, name, domain=None, hidden=False, **kwargs):
        super(DomainField, self).__init__(name, hidden=hidden, **kwargs)
        if not isinstance(domain, Domain):
            raise SchemaError("Field %s needs a domain" % name)
        self.domain = domain

    def normalize(self, value):
        return self.domain.check(value, "field %s" % self.name)

    def from_text(self, s):
        try:
            return self.domain.from_text(s)
        except DomainError:
            raise DomainError("%r is not in domain %s (field %s)" %
                    (s, self.domain.name or list(self.domain.values), self.name))

    def describe(self):
        return super(DomainField, self).describe() + \
            [self.domain.name or '', self.domain.kind] + [six.text_type(v) for v in self.domain]


field_types = {
    'text': TextField,
    'int': IntField,
    'domain': DomainField,
}


class Schema(object):
    """A relation schema: ordered typed attributes and a primary key."""
    def __init__(self, name, fields, unique_key):
        self.name = name
        self.fields = list(fields)
        self.field_names = [f.name for f in self.fields]
        if len(set(self.field_names)) != len(self.field_names):
            raise SchemaError("Duplicate attribute names in relation %s: %s" %
                    (name, self.field_names))
        self._positions = dict((n, i) for i, n in enumerate(self.field_names))
        self._folded = {}
        for n in self.field_names:
            self._folded.setdefault(n.upper(), []).append(n)
        if unique_key not in self._positions:
            raise SchemaError("Relation %s has no primary key field '%s'" % (name, unique_key))
        self.unique_key = unique_key
        self.key_index = self._positions[unique_key]
        key_field = self.fields[self.key_index]
        if key_field.hidden:
            raise SchemaError("Primary key %s.%s cannot be hidden" % (name, unique_key))
        for f in self.fields:
            if f.hidden and f.domain is None:
                raise SchemaError("Hidden field %s.%s must be declared with a domain" %
                        (name, f.name))

    def __len__(self):
        return len(self.fields)

    def __repr__(self):
        return "Schema(%r, %r)" % (self.name, self.field_names)

    def __eq__(self, other):
        if not isinstance(other, Schema):
            return NotImplemented
        return self.name == other.name and self.unique_key == other.unique_key and \
            [f.describe() for f in self.fields] == [f.describe() for f in other.fields]

    def __ne__(self, other):
        eq = self.__eq__(other)
        return eq if eq is NotImplemented else not eq

    __hash__ = object.__hash__

    def match_field(self, name):
        """Resolve an attribute name, exactly or else case-insensitively.
        Returns None if the name is unknown or ambiguous."""
        if name in self._positions:
            return name
        candidates = self._folded.get(name.upper(), [])
        if len(candidates) == 1:
            return candidates[0]
        return None

    def index(self, attribute):
        try:
            return self._positions[attribute]
        except KeyError:
            raise SchemaError("No such field '%s' in relation %s" % (attribute, self.name))

    def field(self, attribute):
        return self.fields[self.index(attribute)]

    def check_fields(self, field_names):
        undefined = [n for n in field_names if n not in self._positions]
        if undefined:
            raise SchemaError("Fields not defined in relation %s: %s" % (self.name, undefined))

    @property
    def hidden_fields(self):
        return [f for f in self.fields if f.hidden]

    def key_of(self, row):
        return row[self.key_index]

    def make_row(self, values):
        if hasattr(values, "items"):
            missing = [n for n in self.field_names if n not in values]
            if missing:
                raise SchemaError("These fields are unspecified for relation %s:\n %s" %
                        (self.name, missing))
            extra = [n for n in values if n not in self._positions]
            if extra:
                raise SchemaError("Fields not defined in relation %s: %s" % (self.name, extra))
            values = [values[n] for n in self.field_names]
        else:
            values = list(values)
            if len(values) != len(self.fields):
                raise SchemaError("Row length %d does not match relation %s of %d fields" %
                        (len(values), self.name, len(self.fields)))
        return tuple(f.normalize(v) for f, v in zip(self.fields, values))

    def row_from_text(self, cells):
        if len(cells) != len(self.fields):
            raise SchemaError("Row has %d fields, relation %s has %d" %
                    (len(cells), self.name, len(self.fields)))
        return tuple(f.from_text(c) for f, c in zip(self.fields, cells))

    def row_to_text(self, row):
        return [f.to_text(v) for f, v in zip(self.fields, row)]

    def replace(self, row, attribute, value):
        i = self.index(attribute)
        return row[:i] + (value,) + row[i+1:]


# From XML Datatypes
attrib_translator = {"true": True, "1": True, "false": False, "0": False}

def translate_attributes(attribs):
    return dict((k, attrib_translator.get(v, v))
        for k, v in list(attribs.items()))


def parse_domain(node):
    """<domain name="bio"><value>B-PER</value>...</domain>, or the values
    as whitespace separated text. type="int" converts them to integers."""
    try:
        name = node.attrib['name']
    except KeyError:
        raise ParseError("missing name attribute on domain", lineno=node.sourceline)
    value_nodes = node.findall('value')
    if value_nodes:
        values = [(v.text or '').strip() for v in value_nodes]
    else:
        values = (node.text or '').split()
    if node.attrib.get('type') == 'int':
        try:
            values = [int(v) for v in values]
        except ValueError as e:
            raise ParseError("domain %s: %s" % (name, e.args[0]), lineno=node.sourceline)
    try:
        return Domain(values, name=name)
    except SchemaError as e:
        raise ParseError(e.args[0], lineno=node.sourceline)


def parse_relation(node, domains):
    """<relation name="TOKEN" uniqueKey="TOK_ID"><field .../>...</relation>"""
    try:
        name, unique_key = node.attrib['name'], node.attrib['uniqueKey']
    except KeyError as e:
        raise ParseError("missing %s attribute on relation" % e.args[0], lineno=node.sourceline)
    fields = []
    for field_node in node.findall('field'):
        fields.append(field_factory(field_node, domains))
    try:
        return Schema(name, fields, unique_key)
    except SchemaError as e:
        raise ParseError(e.args[0], lineno=node.sourceline)


def field_factory(field_node, domains):
    attribs = translate_attributes(field_node.attrib)
    try:
        name, type_name = attribs.pop('name'), attribs.pop('type')
    except KeyError as e:
        raise ParseError("missing %s attribute on field" % e.args[0], lineno=field_node.sourceline)
    if type_name in field_types:
        field_class = field_types[type_name]
        domain = None
    elif type_name in domains:
        field_class = DomainField
        domain = domains[type_name]
    else:
        raise ParseError("field %s: type %s undefined" % (name, type_name),
                lineno=field_node.sourceline)
    hidden = bool(attribs.pop('hidden', False))
    try:
        return field_class(name, domain=domain, hidden=hidden, **attribs)
    except SchemaError as e:
        raise ParseError(e.args[0], lineno=field_node.sourceline)


def parse_xml(f):
    # hack as we might pass in an already parsed doc
    if hasattr(f, 'getroot'):
        return f
    try:
        return etree.parse(f)
    except etree.XMLSyntaxError as e:
        raise ParseError("Invalid XML in model file: %s" % e.args[0])
