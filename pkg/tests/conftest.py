import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from empdial.cognition import LexiconTagger, load_triples
from empdial.data import load_corpus

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def corpus_dir():
    return os.path.join(FIXTURES, "corpus")


@pytest.fixture(scope="session")
def corpus():
    return load_corpus(os.path.join(FIXTURES, "corpus"))


@pytest.fixture(scope="session")
def triple_store():
    store, _ = load_triples(os.path.join(FIXTURES, "triples.tsv"))
    return store


@pytest.fixture(scope="session")
def tagger():
    return LexiconTagger.from_file(os.path.join(FIXTURES, "pos_lexicon.json"))


@pytest.fixture(scope="session")
def path_cache(corpus, triple_store, tagger):
    """Path records for the fixture corpus at the small search config."""
    from empdial.cli import run_paths
    from empdial.model import ModelConfig
    cfg = ModelConfig(vocab_size=len(corpus.vocab), d_model=24, ffn_dim=48)
    records, stats = run_paths(corpus, triple_store, 0, tagger, cfg)
    return {r["id"]: r for r in records}


def random_token_vectors(tokens, dim, seed):
    """Fixed vector per token, precomputed in sorted order so every
    consumer sees identical values regardless of lookup order."""
    rng = np.random.default_rng(seed)
    table = {}
    for tok in sorted(set(tokens)):
        table[tok] = rng.standard_normal(dim)
    fallback = rng.standard_normal(dim)

    def lookup(token):
        return table.get(token, fallback)

    return lookup
