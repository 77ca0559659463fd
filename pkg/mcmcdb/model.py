import warnings

import six

from .factors import (ConstraintTemplate, FactorGraphSpec, FactorTemplate,
    neighbor_patterns)
from .schema import (MCMCDBError, ParseError, SchemaError, parse_domain,
    parse_relation, parse_xml, translate_attributes)
from .world import World


class ModelFile(object):
    """A parsed model file::

        <model name="..." kind="generic|skipchain">
          <domain name="..."><value>...</value>...</domain>
          <relation name="..." uniqueKey="...">
            <field name="..." type="int|text|DOMAIN" hidden="true"/>
            <row FIELD="value" .../>
          </relation>
          <template name="..." pattern="..." relation="..." attributes="..."
                    features="...">
            <param name="...">...</param>
            <weight on="...">1.5</weight>
          </template>
          <constraint name="..." pattern="..." relation="..." attributes="..."
                      check="..."/>
        </model>
    """
    template_attributes = ('name', 'pattern', 'relation', 'attributes', 'features', 'check')

    def __init__(self, f):
        """initialize a model from a filename or file-like object."""
        self.source = f if isinstance(f, six.string_types) else getattr(f, 'name', None)
        self.name, self.kind, self.domains, self.schemas, self.rows, self.templates \
            = self.model_parse(f)

    def model_parse(self, f):
        doc = parse_xml(f)
        root = doc.getroot()
        if root.tag != 'model':
            raise ParseError("model file root element must be <model>, not <%s>" % root.tag,
                    lineno=root.sourceline, source=self.source)
        name = root.attrib.get('name')
        kind = root.attrib.get('kind', 'generic')

        domains = {}
        for node in doc.xpath("/model/domain|/model/domains/domain"):
            domain = parse_domain(node)
            domains[domain.name] = domain

        schemas, rows = [], {}
        for node in doc.xpath("/model/relation|/model/relations/relation"):
            schema = parse_relation(node, domains)
            schemas.append(schema)
            rows[schema.name] = [(r.sourceline, dict(r.attrib)) for r in node.findall('row')]

        templates = []
        for node in doc.xpath("/model/template|/model/constraint|/model/templates/*"):
            if not isinstance(node.tag, six.string_types):
                continue
            templates.append(self.template_factory(node))
        names = [t['name'] for t in templates]
        duplicates = sorted(set(n for n in names if names.count(n) > 1))
        if duplicates:
            raise ParseError("templates defined more than once: %s" % duplicates,
                    source=self.source)
        return name, kind, domains, schemas, rows, templates

    def template_factory(self, node):
        """Templates are kept as plain descriptions until a FactorGraphSpec
        is built; the skip-chain builder reads only their weights."""
        attribs = translate_attributes(node.attrib)
        try:
            name = attribs['name']
        except KeyError:
            raise ParseError("missing name attribute on %s" % node.tag,
                    lineno=node.sourceline, source=self.source)
        params = dict((k, v) for k, v in six.iteritems(attribs)
                      if k not in self.template_attributes)
        for p in node.findall('param'):
            try:
                params[p.attrib['name']] = (p.text or '').strip()
            except KeyError:
                raise ParseError("missing name attribute on param",
                        lineno=p.sourceline, source=self.source)
        return {
            'name': name,
            'tag': node.tag,
            'pattern': attribs.get('pattern'),
            'relation': attribs.get('relation'),
            'attributes': attribs.get('attributes', ''),
            'features': (attribs.get('features') or 'indicator').split(),
            'check': attribs.get('check'),
            'params': params,
            'weights': self.parse_weights(node),
            'lineno': node.sourceline,
        }

    def parse_weights(self, node):
        weights = {}
        for w in node.findall('weight'):
            key = w.attrib.get('on')
            if key is None:
                raise ParseError("missing on attribute on weight",
                        lineno=w.sourceline, source=self.source)
            text = w.attrib.get('value', w.text)
            try:
                value = float((text or '').strip())
            except ValueError:
                raise ParseError("weight %r is not a number: %r" % (key, text),
                        lineno=w.sourceline, source=self.source)
            key = tuple(key.split())
            if key in weights:
                warnings.warn("weight %s given twice (line %s); using the last value"
                        % (" ".join(key), w.sourceline))
            weights[key] = value
        return weights

    def template(self, name):
        for t in self.templates:
            if t['name'] == name:
                return t
        return None

    def build_template(self, description, schemas=None):
        d = description
        if not d['pattern'] or not d['relation']:
            raise ParseError("template %s needs pattern and relation attributes" % d['name'],
                    lineno=d['lineno'], source=self.source)
        if d['pattern'] not in neighbor_patterns:
            raise ParseError("template %s: pattern %s undefined" % (d['name'], d['pattern']),
                    lineno=d['lineno'], source=self.source)
        params = dict(d['params'])
        structural = dict((k, params.pop(k)) for k in list(params)
                          if k in ('group', 'order', 'match', 'uppercase_only'))
        try:
            pattern = neighbor_patterns[d['pattern']](d['relation'], d['attributes'], **structural)
            if d['tag'] == 'constraint':
                if not d['check']:
                    raise SchemaError("constraint %s needs a check attribute" % d['name'])
                return ConstraintTemplate(d['name'], pattern, d['check'], params=params)
            return FactorTemplate(d['name'], pattern, features=d['features'],
                                  weights=d['weights'], params=params)
        except SchemaError as e:
            raise ParseError(e.args[0], lineno=d['lineno'], source=self.source)

    def spec(self, schemas=None):
        """Build the FactorGraphSpec. ``schemas`` default to the relations
        declared in the file."""
        if schemas is None:
            schemas = self.schemas
        templates = [self.build_template(d) for d in self.templates]
        try:
            return FactorGraphSpec(templates, schemas)
        except SchemaError as e:
            raise ParseError(e.args[0], source=self.source)

    def world(self):
        """A World holding the relations and any <row> elements of the file."""
        world = World(self.schemas)
        for schema in self.schemas:
            for lineno, attribs in self.rows[schema.name]:
                try:
                    values = {}
                    schema.check_fields(attribs)
                    for name in schema.field_names:
                        if name not in attribs:
                            raise SchemaError("row does not set %s" % name)
                        values[name] = schema.field(name).from_text(attribs[name])
                    world.insert(schema.name, values)
                except MCMCDBError as e:
                    raise ParseError(e.args[0], lineno=lineno, source=self.source)
        return world


def load_spec(path, world=None):
    """Load any model file: skip-chain weight files go through the
    skip-chain builder, everything else is a generic model. When a world
    is given the spec is checked against its schemas."""
    model = ModelFile(path)
    if model.kind == 'skipchain':
        from .ner import build_skip_chain_spec
        schema = None
        if world is not None:
            schema = world.schema(world.match_relation('TOKEN') or 'TOKEN')
        spec = build_skip_chain_spec(model, schema=schema)
    elif model.kind == 'generic':
        spec = model.spec(world.schemas if world is not None and not model.schemas else None)
    else:
        raise ParseError("unknown model kind '%s'" % model.kind, source=model.source)
    if world is not None:
        try:
            spec.check_world(world)
        except SchemaError as e:
            raise ParseError(e.args[0], source=model.source)
    return spec
