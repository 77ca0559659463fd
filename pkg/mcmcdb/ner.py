"""Skip-chain named entity model over the TOKEN relation.

Four templates score a labelling:

- emission: the (STRING, LABEL) pair of every token
- transition: the labels of consecutive tokens of a document
- bias: every LABEL on its own
- skip: pairs of tokens with identical STRING, rewarding equal labels

Weights come from a skip-chain model file; the structure is fixed here.
"""

import collections
import logging
import os
import warnings

import six

from .factors import (FactorGraphSpec, FactorTemplate, SameValuePattern,
    SequencePattern, TuplePattern)
from .model import ModelFile
from .sampler import UniformProposer, make_rng, propose_uniform
from .schema import MCMCDBError
from .world import BIO_LABELS, VariableRef, token_schema, write_tokens

logger = logging.getLogger(__name__)


SKIP_CHAIN_WEIGHTS = os.path.join(os.path.dirname(__file__), "skipchain.xml")

SKIP_CHAIN_TEMPLATES = ('emission', 'transition', 'bias', 'skip')


class SkipChainOptions(object):
    """``scope`` is "document" (skip edges join tokens of one document) or
    "corpus"; ``uppercase_only`` links only strings starting with an
    uppercase letter."""
    scopes = ('document', 'corpus')

    def __init__(self, scope='document', uppercase_only=True):
        if scope not in self.scopes:
            raise ValueError("scope must be one of %s, not %r" % (", ".join(self.scopes), scope))
        self.scope = scope
        self.uppercase_only = bool(uppercase_only)

    def __repr__(self):
        return "SkipChainOptions(scope=%r, uppercase_only=%r)" % (self.scope, self.uppercase_only)

    @classmethod
    def from_template(cls, description):
        params = description['params'] if description else {}
        return cls(scope=params.get('scope', 'document'),
                   uppercase_only=params.get('uppercase_only', True) in (True, 'true', '1'))


def build_skip_chain_spec(weights, schema=None, options=None):
    """FactorGraphSpec of the skip-chain model. ``weights`` is a model file
    (path or ModelFile); a template it lacks gets no weights, with a
    warning, and scores 0 everywhere."""
    model = weights if isinstance(weights, ModelFile) else ModelFile(weights)
    if schema is None:
        schema = token_schema()
    schema.check_fields(['STRING', 'LABEL', 'DOC_ID'])
    if options is None:
        options = SkipChainOptions.from_template(model.template('skip'))
    for t in model.templates:
        if t['name'] not in SKIP_CHAIN_TEMPLATES:
            warnings.warn("template %s is not part of the skip-chain model and is ignored"
                    % t['name'])

    def weights_of(name):
        description = model.template(name)
        if description is None:
            warnings.warn("skip-chain model has no %s template; defaulting to 0" % name)
            return {}
        return description['weights']

    relation = schema.name
    templates = [
        FactorTemplate('emission', TuplePattern(relation, ['STRING', 'LABEL']),
                       ['indicator'], weights_of('emission')),
        FactorTemplate('transition', SequencePattern(relation, ['LABEL'], group='DOC_ID'),
                       ['indicator'], weights_of('transition')),
        FactorTemplate('bias', TuplePattern(relation, ['LABEL']),
                       ['indicator'], weights_of('bias')),
        FactorTemplate('skip', SameValuePattern(relation, ['LABEL'], match='STRING',
                           group='DOC_ID' if options.scope == 'document' else None,
                           uppercase_only=options.uppercase_only),
                       ['agreement'], weights_of('skip')),
    ]
    logger.debug("skip-chain model: %s", options)
    return FactorGraphSpec(templates, {relation: schema})


class BatchState(object):
    """The label variables of up to ``documents`` documents, and how many
    proposals have been drawn from them."""
    def __init__(self, refs, documents):
        self.refs = refs
        self.documents = documents
        self.proposals_since_load = 0

    def __repr__(self):
        return "BatchState(documents=%r, %d variables, %d proposals)" % (
            self.documents, len(self.refs), self.proposals_since_load)


def refresh_batch(world, rng, documents=5, relation='TOKEN', attribute='LABEL'):
    """Load the variables of up to ``documents`` documents chosen uniformly
    without replacement."""
    doc_ids = sorted(value for (value,) in world.index(relation, ('DOC_ID',)))
    if not doc_ids:
        raise MCMCDBError("Cannot load a batch: relation %s has no documents" % relation)
    chosen = rng.choice(len(doc_ids), size=min(documents, len(doc_ids)), replace=False)
    docs = sorted(doc_ids[int(i)] for i in chosen)
    index = world.index(relation, ('DOC_ID',))
    refs = [VariableRef(relation, key, attribute)
            for doc in docs for key in sorted(index[(doc,)])]
    return BatchState(refs, docs)


def uniform_flip_proposer(batch, rng, world):
    """Flip one label of the batch to a uniformly chosen label (its current
    one included). The proposal is symmetric."""
    return propose_uniform(world, batch.refs, rng)


class UniformFlipProposer(UniformProposer):
    """Uniform label flips within a batch of documents, reloading the batch
    every ``proposals_per_batch`` proposals."""
    def __init__(self, relation='TOKEN', attribute='LABEL', documents=5,
                 proposals_per_batch=2000):
        super(UniformFlipProposer, self).__init__()
        if documents < 1 or proposals_per_batch < 1:
            raise ValueError("documents and proposals_per_batch must be positive")
        self.relation = relation
        self.attribute = attribute
        self.documents = documents
        self.proposals_per_batch = proposals_per_batch
        self.batch = None

    def candidates(self, world, rng):
        if self.batch is None or self.batch.proposals_since_load >= self.proposals_per_batch:
            self.batch = refresh_batch(world, rng, self.documents, self.relation, self.attribute)
        self.batch.proposals_since_load += 1
        return self.batch.refs


BioViolation = collections.namedtuple('BioViolation', 'index label previous')


def bio_validate(labels):
    """Positions where an I-T label does not follow B-T or I-T."""
    violations = []
    previous = None
    for i, label in enumerate(labels):
        if label.startswith('I-'):
            kind = label[2:]
            if previous not in ('B-' + kind, 'I-' + kind):
                violations.append(BioViolation(i, label, previous))
        previous = label
    return violations


DEFAULT_VOCABULARY = {
    'PER': ['Clinton', 'Hillary', 'Obama', 'Smith', 'Garcia', 'Ortiz', 'Jeter', 'Rivera'],
    'ORG': ['IBM', 'Google', 'Reuters', 'Yankees', 'Boston', 'Senate', 'Intel'],
    'LOC': ['Boston', 'Paris', 'Chicago', 'Texas', 'Iraq', 'Kenya'],
    'MISC': ['American', 'Olympics', 'Democrat', 'English'],
    'O': ['the', 'said', 'of', 'a', 'in', 'to', 'and', 'on', 'for', 'with', 'was',
          'at', 'by', 'from', 'team', 'game', 'year', 'after'],
}


class TruthModel(object):
    """Plants entity mentions: at each free position an entity starts with
    probability ``entity_rate``, of a uniform type and a uniform length up
    to ``max_length``. The labels it produces are always valid BIO."""
    def __init__(self, entity_rate=0.15, types=('PER', 'ORG', 'LOC', 'MISC'), max_length=2):
        if not 0 <= entity_rate <= 1:
            raise ValueError("entity_rate must lie in [0, 1], not %r" % (entity_rate,))
        if max_length < 1:
            raise ValueError("max_length must be at least 1")
        self.entity_rate = entity_rate
        self.types = tuple(types)
        self.max_length = max_length

    def labels(self, n, rng):
        labels = []
        while len(labels) < n:
            if self.types and rng.random() < self.entity_rate:
                kind = self.types[int(rng.integers(len(self.types)))]
                length = min(int(rng.integers(1, self.max_length + 1)), n - len(labels))
                labels.append('B-' + kind)
                labels.extend(['I-' + kind] * (length - 1))
            else:
                labels.append('O')
        return labels


def _strings_for(vocab, label):
    if not hasattr(vocab, 'items'):
        return vocab
    kind = 'O' if label == 'O' else label[2:]
    return vocab.get(kind) or vocab.get('O')


def generate_synthetic_corpus(path, num_docs, tokens_per_doc, vocab=None,
                              truth_model=None, seed=0):
    """Write a token corpus of ``num_docs`` documents. Strings are drawn per
    planted label from ``vocab`` (a mapping from entity type, or "O", to
    strings) or, when ``vocab`` is a plain list, from that list for every
    token. Entity strings repeat, so skip edges fire."""
    if num_docs < 0 or tokens_per_doc < 0:
        raise ValueError("num_docs and tokens_per_doc must not be negative")
    if vocab is None:
        vocab = DEFAULT_VOCABULARY
    elif not hasattr(vocab, 'items'):
        vocab = list(vocab)
        if not vocab:
            raise ValueError("vocab must not be empty")
    if truth_model is None:
        truth_model = TruthModel()
    rng = make_rng(seed, 0)
    rows = []
    tok_id = 0
    for doc in range(1, num_docs + 1):
        for label in truth_model.labels(tokens_per_doc, rng):
            strings = _strings_for(vocab, label)
            tok_id += 1
            rows.append((tok_id, doc, strings[int(rng.integers(len(strings)))], label))
    write_tokens(rows, path)
    logger.info("wrote %d tokens in %d documents to %s", tok_id, num_docs, path)
    return path


def label_sequences(world, relation='TOKEN', attribute='LABEL'):
    """Labels per document, in token order."""
    schema = world.schema(relation)
    label = schema.index(attribute)
    index = world.index(relation, ('DOC_ID',))
    r = world.relation(relation)
    return dict((doc, [r.rows[k][label] for k in sorted(keys)])
                for (doc,), keys in six.iteritems(index))


def bio_violations(world, relation='TOKEN', attribute='LABEL'):
    """BIO violations per document, for documents that have any."""
    found = {}
    for doc, labels in six.iteritems(label_sequences(world, relation, attribute)):
        violations = bio_validate(labels)
        if violations:
            found[doc] = violations
    return found
