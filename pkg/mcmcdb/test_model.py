import io
import math

import pytest

from .factors import ConstraintTemplate, exact_distribution
from .model import ModelFile, load_spec
from .ner import SKIP_CHAIN_WEIGHTS
from .schema import ParseError
from .world import VariableRef

from .test_world import fixture_world


coin_model = u"""
<model name="coins">
  <domain name="ab"><value>a</value><value>b</value></domain>
  <relation name="V" uniqueKey="ID">
    <field name="ID" type="int"/>
    <field name="G" type="int"/>
    <field name="X" type="ab" hidden="true"/>
    <row ID="1" G="1" X="a"/>
    <row ID="2" G="1" X="b"/>
    <row ID="3" G="2" X="a"/>
  </relation>
  <template name="prior" pattern="tuple" relation="V" attributes="X">
    <weight on="a">0.6931471805599453</weight>
  </template>
  <template name="pair" pattern="sequence" relation="V" attributes="X" group="G"
            features="agreement">
    <weight on="agree">1.0</weight>
  </template>
  <constraint name="not_both_b" pattern="sequence" relation="V" attributes="X" group="G"
              check="forbid">
    <param name="values">c</param>
  </constraint>
</model>
"""


class TestModelFile(object):
    def setup_method(self):
        self.model = ModelFile(io.StringIO(coin_model))

    def test_parse(self):
        assert self.model.name == 'coins'
        assert self.model.kind == 'generic'
        assert [s.name for s in self.model.schemas] == ['V']
        assert [t['name'] for t in self.model.templates] == ['prior', 'pair', 'not_both_b']
        assert self.model.template('pair')['params'] == {'group': 'G'}
        assert self.model.template('prior')['weights'] == {('a',): math.log(2)}
        assert self.model.template('bigram') is None

    def test_world(self):
        world = self.model.world()
        assert len(world) == 3
        assert world.get('V', 2) == (2, 1, 'b')

    def test_spec(self):
        spec = self.model.spec()
        assert [t.name for t in spec.templates] == ['prior', 'pair', 'not_both_b']
        assert isinstance(spec.template('not_both_b'), ConstraintTemplate)
        dist = exact_distribution(spec, self.model.world())
        assert dist.marginal(VariableRef('V', 3, 'X'))['a'] == pytest.approx(2.0 / 3)


broken_models = {
"not_a_model":
u"""<weights/>""",
"template_without_name":
u"""<model><template pattern="tuple"/></model>""",
"duplicate_templates":
u"""<model><template name="t"/><template name="t"/></model>""",
"weight_without_key":
u"""<model><template name="t"><weight>1.0</weight></template></model>""",
"weight_not_a_number":
u"""<model><template name="t"><weight on="a">heavy</weight></template></model>""",
"row_missing_field":
u"""<model><relation name="R" uniqueKey="ID">
  <field name="ID" type="int"/><field name="S" type="text"/><row ID="1"/>
</relation></model>""",
}


@pytest.mark.parametrize('name', sorted(broken_models))
def test_broken_models(name):
    with pytest.raises(ParseError):
        ModelFile(io.StringIO(broken_models[name])).world()


broken_templates = {
"no_pattern":
u"""<model><template name="t" relation="V" attributes="X"/></model>""",
"undefined_pattern":
u"""<model><template name="t" pattern="ring" relation="V" attributes="X"/></model>""",
"constraint_without_check":
u"""<model><constraint name="t" pattern="tuple" relation="V" attributes="X"/></model>""",
"unknown_relation":
u"""<model><template name="t" pattern="tuple" relation="W" attributes="X"/></model>""",
}


@pytest.mark.parametrize('name', sorted(broken_templates))
def test_broken_templates(name):
    schemas = ModelFile(io.StringIO(coin_model)).schemas
    with pytest.raises(ParseError):
        ModelFile(io.StringIO(broken_templates[name])).spec(schemas)


def test_weight_given_twice_warns():
    text = u"""<model><template name="t"><weight on="a">1</weight><weight on="a">2</weight>
    </template></model>"""
    with pytest.warns(UserWarning, match="given twice"):
        model = ModelFile(io.StringIO(text))
    assert model.template('t')['weights'] == {('a',): 2.0}


def test_load_skip_chain_spec():
    world = fixture_world()
    spec = load_spec(SKIP_CHAIN_WEIGHTS, world)
    assert [t.name for t in spec.templates] == ['emission', 'transition', 'bias', 'skip']
    assert spec.template('skip').pattern.group == 'DOC_ID'


def test_load_spec_checks_the_world(tmpdir):
    path = tmpdir.join('coins.xml')
    path.write_text(coin_model, encoding='utf-8')
    with pytest.raises(ParseError):
        load_spec(str(path), fixture_world())


def test_unknown_model_kind(tmpdir):
    path = tmpdir.join('model.xml')
    path.write_text(u'<model kind="crf"/>', encoding='utf-8')
    with pytest.raises(ParseError):
        load_spec(str(path))
