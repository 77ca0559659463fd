import io
import os

import pytest

from .sampler import make_rng
from .schema import ContractViolation, CorruptionError, ParseError, SchemaError
from .world import (BIO_LABELS, Delta, VariableRef, World, apply_delta,
    clone_world, compose_deltas, ingest_tokens, load_world, read_snapshot,
    revert_delta, token_schema, update_field, write_snapshot, write_tokens)


def make_token_world(tokens):
    """``tokens`` are (TOK_ID, DOC_ID, STRING, LABEL) or with a fifth
    TRUTH value; TRUTH defaults to O."""
    world = World([token_schema()])
    for t in tokens:
        tok_id, doc_id, string, value = t[:4]
        truth = t[4] if len(t) > 4 else 'O'
        world.insert('TOKEN', (tok_id, doc_id, string, value, truth))
    return world


def label(key):
    return VariableRef('TOKEN', key, 'LABEL')


# Two documents with a repeated organisation and a person pair.
fixture_tokens = [
    (1, 1, 'IBM', 'O', 'B-ORG'),
    (2, 1, 'hired', 'O', 'O'),
    (3, 1, 'Smith', 'O', 'B-PER'),
    (4, 1, 'from', 'O', 'O'),
    (5, 1, 'IBM', 'O', 'B-ORG'),
    (6, 2, 'Boston', 'O', 'B-ORG'),
    (7, 2, 'signed', 'O', 'O'),
    (8, 2, 'Jeter', 'O', 'B-PER'),
]


def fixture_world():
    return make_token_world(fixture_tokens)


def write_file(tmpdir, name, text):
    path = os.path.join(str(tmpdir), name)
    with io.open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(text)
    return path


class TestWorld(object):
    def setup_method(self):
        self.world = fixture_world()

    def test_hidden_refs(self):
        refs = self.world.hidden_refs()
        assert refs == [label(k) for k in range(1, 9)]
        assert self.world.domain_of(refs[0]) == token_schema().field('LABEL').domain

    def test_update_field(self):
        delta = update_field(self.world, label(3), 'B-PER')
        assert self.world.value(label(3)) == 'B-PER'
        assert delta.minus == {('TOKEN', 3): (3, 1, 'Smith', 'O', 'B-PER')}
        assert delta.plus == {('TOKEN', 3): (3, 1, 'Smith', 'B-PER', 'B-PER')}
        assert len(delta) == 1

    def test_update_observed_field_is_refused(self):
        with pytest.raises(ContractViolation):
            update_field(self.world, VariableRef('TOKEN', 3, 'STRING'), 'Jones')
        assert self.world.get('TOKEN', 3)[2] == 'Smith'

    def test_update_unknown_key(self):
        with pytest.raises(SchemaError):
            update_field(self.world, label(99), 'O')

    def test_apply_and_revert(self):
        before = clone_world(self.world)
        delta = Delta.for_update(self.world, label(1), 'B-ORG')
        apply_delta(self.world, delta)
        assert self.world != before
        revert_delta(self.world, delta)
        assert self.world == before
        assert self.world.fingerprint() == before.fingerprint()

    def test_apply_mismatched_delta(self):
        delta = Delta.for_update(self.world, label(1), 'B-ORG')
        self.world.apply(delta)
        with pytest.raises(CorruptionError):
            self.world.apply(delta)

    def test_clone_is_independent(self):
        other = self.world.clone()
        other.update_field(label(2), 'B-LOC')
        assert self.world.value(label(2)) == 'O'

    def test_index_follows_updates(self):
        idx = self.world.index('TOKEN', ('LABEL',))
        assert sorted(idx[('O',)]) == list(range(1, 9))
        self.world.update_field(label(3), 'B-PER')
        assert list(idx[('B-PER',)]) == [3]
        assert 3 not in idx[('O',)]

    def test_duplicate_key(self):
        with pytest.raises(SchemaError):
            self.world.insert('TOKEN', (1, 1, 'x', 'O', 'O'))

    def test_tuples_read(self):
        self.world.tuples_read = 0
        list(self.world.scan('TOKEN'))
        assert self.world.tuples_read == 8
        self.world.lookup('TOKEN', ('STRING',), ('IBM',))
        assert self.world.tuples_read == 10


class TestDelta(object):
    def setup_method(self):
        self.world = fixture_world()

    def test_compose(self):
        d1 = Delta.for_update(self.world, label(1), 'B-ORG')
        self.world.apply(d1)
        d2 = Delta.for_update(self.world, label(2), 'B-PER')
        self.world.apply(d2)
        composed = compose_deltas(d1, d2)
        assert set(composed.minus) == set([('TOKEN', 1), ('TOKEN', 2)])
        assert len(d1) == 1

    def test_compose_drops_reverted_tuples(self):
        d1 = Delta.for_update(self.world, label(1), 'B-ORG')
        self.world.apply(d1)
        d2 = Delta.for_update(self.world, label(1), 'O')
        composed = compose_deltas(d1, d2)
        assert not composed
        assert len(composed) == 0

    def test_compose_keeps_the_first_minus(self):
        d1 = Delta.for_update(self.world, label(1), 'B-ORG')
        self.world.apply(d1)
        d2 = Delta.for_update(self.world, label(1), 'B-LOC')
        composed = compose_deltas(d1, d2)
        assert composed.minus[('TOKEN', 1)][3] == 'O'
        assert composed.plus[('TOKEN', 1)][3] == 'B-LOC'

    def test_compose_rejects_unchained_deltas(self):
        d1 = Delta.for_update(self.world, label(1), 'B-ORG')
        d2 = Delta.for_update(self.world, label(1), 'B-LOC')
        with pytest.raises(CorruptionError):
            compose_deltas(d1, d2)

    def test_revert_undoes_random_update_sequences(self):
        rng = make_rng(31)
        refs = self.world.hidden_refs()
        for _ in range(1000):
            before = self.world.clone()
            delta = Delta()
            for _ in range(int(rng.integers(1, 8))):
                ref = refs[int(rng.integers(len(refs)))]
                step = Delta.for_update(self.world, ref, BIO_LABELS[int(rng.integers(9))])
                self.world.apply(step)
                delta.compose(step)
            after = self.world.clone()
            assert self.world.revert(delta) == before
            assert self.world.fingerprint() == before.fingerprint()
            assert self.world.apply(delta) == after

    def test_inverse(self):
        d = Delta.for_update(self.world, label(4), 'I-PER')
        assert d.inverse().inverse() == d
        assert d.inverse().plus == d.minus

    def test_changed_refs(self):
        d = Delta.for_update(self.world, label(4), 'I-PER')
        assert d.changed_refs(self.world) == [label(4)]
        assert d.removed('TOKEN') == [(4, 1, 'from', 'O', 'O')]
        assert d.added('TOKEN') == [(4, 1, 'from', 'I-PER', 'O')]
        assert d.relations() == set(['TOKEN'])


corpus_text = u"""TOK_ID\tDOC_ID\tSTRING\tTRUTH
1\t1\tIBM\tB-ORG
2\t1\thired\tO
3\t1\tSmith\tB-PER
4\t2\tBoston\tB-LOC
5\t2\tsaid\tO
"""


def test_ingest_tokens(tmpdir):
    world = ingest_tokens(write_file(tmpdir, 'corpus.tsv', corpus_text))
    assert len(world) == 5
    assert world.get('TOKEN', 3) == (3, 1, u'Smith', 'O', 'B-PER')
    assert set(world.value(r) for r in world.hidden_refs()) == set(['O'])


def test_ingest_without_header(tmpdir):
    text = u"".join(corpus_text.splitlines(True)[1:])
    assert len(ingest_tokens(write_file(tmpdir, 'corpus.tsv', text))) == 5


def test_ingest_empty_corpus(tmpdir):
    world = ingest_tokens(write_file(tmpdir, 'corpus.tsv', u""))
    assert len(world) == 0
    assert world.hidden_refs() == []


bad_corpora = {
    'short_row': (u"1\t1\tIBM\n", 1),
    'bad_int': (u"TOK_ID\tDOC_ID\tSTRING\tTRUTH\n1\tone\tIBM\tO\n", 2),
    'bad_label': (u"1\t1\tIBM\tO\n2\t1\tx\tB-CITY\n", 2),
    'duplicate_key': (u"1\t1\tIBM\tO\n1\t1\tIBM\tO\n", 2),
}


@pytest.mark.parametrize('name', sorted(bad_corpora))
def test_bad_corpora(tmpdir, name):
    text, lineno = bad_corpora[name]
    with pytest.raises(ParseError) as e:
        ingest_tokens(write_file(tmpdir, 'corpus.tsv', text))
    assert e.value.lineno == lineno


def test_write_tokens_round_trip(tmpdir):
    path = os.path.join(str(tmpdir), 'out.tsv')
    write_tokens([(1, 1, 'IBM', 'B-ORG'), (2, 1, 'said', 'O')], path)
    with io.open(path, encoding='utf-8') as f:
        assert f.readline() == u"TOK_ID\tDOC_ID\tSTRING\tTRUTH\n"
    world = ingest_tokens(path)
    assert world.get('TOKEN', 1)[4] == 'B-ORG'


def test_snapshot_round_trip(tmpdir):
    world = fixture_world()
    world.update_field(label(6), 'B-ORG')
    path = os.path.join(str(tmpdir), 'store.tsv')
    write_snapshot(world, path)
    restored = read_snapshot(path)
    assert restored == world
    assert restored.schema('TOKEN') == world.schema('TOKEN')
    assert restored.value(label(6)) == 'B-ORG'
    assert load_world(path) == world


def test_snapshot_is_reproducible(tmpdir):
    a, b = os.path.join(str(tmpdir), 'a.tsv'), os.path.join(str(tmpdir), 'b.tsv')
    write_snapshot(fixture_world(), a)
    write_snapshot(fixture_world(), b)
    with io.open(a, 'rb') as fa, io.open(b, 'rb') as fb:
        assert fa.read() == fb.read()


def test_not_a_snapshot(tmpdir):
    with pytest.raises(ParseError):
        read_snapshot(write_file(tmpdir, 'store.tsv', corpus_text))


def test_load_world_falls_back_to_corpus(tmpdir):
    assert len(load_world(write_file(tmpdir, 'corpus.tsv', corpus_text))) == 5


def test_bio_labels():
    assert len(BIO_LABELS) == 9
    assert 'O' in BIO_LABELS
