import io

import pytest

from .database import ProbabilisticDatabase
from .model import ModelFile
from .ner import SKIP_CHAIN_WEIGHTS, UniformFlipProposer, generate_synthetic_corpus
from .sampler import UniformProposer
from .schema import MCMCDBError, QueryValidationError
from .world import write_snapshot

from .test_factors import coin_spec, coin_world
from .test_model import coin_model
from .test_query import q2, token_queries
from .test_world import fixture_world


class TestProbabilisticDatabase(object):
    def setup_method(self):
        self.db = ProbabilisticDatabase(coin_world(), coin_spec())

    def test_default_proposers(self):
        assert isinstance(self.db.proposer, UniformProposer)
        assert not isinstance(self.db.proposer, UniformFlipProposer)
        db = ProbabilisticDatabase(fixture_world(), SKIP_CHAIN_WEIGHTS)
        assert isinstance(db.proposer, UniformFlipProposer)
        assert db.model_path == SKIP_CHAIN_WEIGHTS

    def test_query(self):
        assert self.db.query("SELECT ID FROM V WHERE X='a'") == {(1,): 1, (2,): 1, (3,): 1}
        assert self.db.query(self.db.parse("SELECT COUNT(*) FROM V")) == {(3,): 1}

    def test_bad_query(self):
        with pytest.raises(QueryValidationError):
            self.db.query("SELECT STRING FROM V")

    def test_marginals_leave_the_world_alone(self):
        fingerprint = self.db.world.fingerprint()
        estimate = self.db.marginals("SELECT ID FROM V WHERE X='a'", 50, steps_per_sample=5)
        assert estimate.z == 50
        assert self.db.world.fingerprint() == fingerprint

    def test_marginals_with_seeds(self):
        q = "SELECT ID FROM V WHERE X='b'"
        estimate = self.db.marginals(q, 20, seeds=[4, 4], steps_per_sample=3, n_jobs=1)
        single = self.db.marginals(q, 20, seed=4, steps_per_sample=3)
        assert estimate.z == 40
        assert estimate.counts == dict((t, 2 * c) for t, c in single.counts.items())

    def test_marginals_approach_the_exact_ones(self):
        q = "SELECT ID FROM V WHERE X='a'"
        exact = self.db.exact_marginals(q)
        estimate = self.db.marginals(q, 3000, steps_per_sample=4, seed=2)
        for t, p in exact.items():
            assert estimate.probability(t) == pytest.approx(p, abs=0.06)

    def test_mismatched_model(self):
        with pytest.raises(MCMCDBError):
            ProbabilisticDatabase(fixture_world(), coin_spec())

    def test_bad_world(self):
        with pytest.raises(TypeError):
            ProbabilisticDatabase(None, coin_spec())


def test_from_snapshot_and_model_file(tmpdir):
    model = str(tmpdir.join('coins.xml'))
    with io.open(model, 'w', encoding='utf-8') as f:
        f.write(coin_model)
    store = str(tmpdir.join('coins.snapshot'))
    write_snapshot(ModelFile(model).world(), store)
    db = ProbabilisticDatabase(store, model)
    assert db.query("SELECT COUNT(*) FROM V WHERE X='b'") == {(1,): 1}
    assert set(db.exact_marginals("SELECT ID FROM V")) == set([(1,), (2,), (3,)])


def test_from_corpus(tmpdir):
    corpus = generate_synthetic_corpus(str(tmpdir.join('corpus.tsv')), 3, 8, seed=5)
    db = ProbabilisticDatabase.from_corpus(corpus)
    assert len(db.world) == 24
    assert db.query(q2) == {(0,): 1}
    estimate = db.marginals(token_queries['q2'], 10, steps_per_sample=50)
    assert estimate.z == 10
    assert sum(estimate.counts.values()) == 10
