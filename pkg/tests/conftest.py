"""Shared fixtures: small corpora and models sized for fast tests."""

import numpy as np
import pytest

from coteach import GenConfig, MatcherSpec, generate_synthetic_corpus, init_params


@pytest.fixture(scope="session")
def tiny_gen_config():
    return GenConfig(vocab_size=60, n_topics=3, n_train=120, n_valid=40,
                     n_test_contexts=20, n_candidates=6, turns_per_context=2,
                     tokens_per_utterance=5, false_negative_rate=0.3, seed=7)


@pytest.fixture(scope="session")
def tiny_corpus(tiny_gen_config):
    return generate_synthetic_corpus(tiny_gen_config)


@pytest.fixture(params=["mean-embedding-bilinear", "interaction-mlp"])
def small_spec(request):
    return MatcherSpec(kind=request.param, vocab_size=20, embedding_dim=4,
                       hidden_dim=3)


@pytest.fixture
def small_model(small_spec):
    return init_params(small_spec, seed=11)


def random_dialogue(rng, vocab_size=20, n_utts=2, n_tokens=3):
    """A random TokenizedDialogue for property tests."""
    from coteach import TokenizedDialogue
    context = tuple(
        tuple(int(t) for t in rng.integers(0, vocab_size, size=n_tokens))
        for _ in range(n_utts))
    response = tuple(int(t) for t in rng.integers(0, vocab_size, size=n_tokens))
    return TokenizedDialogue(context, response)


def random_triple(rng, vocab_size=20, n_utts=2, n_tokens=3):
    from coteach import PairwiseTriple
    d = random_dialogue(rng, vocab_size, n_utts, n_tokens)
    neg = tuple(int(t) for t in rng.integers(0, vocab_size, size=n_tokens))
    while neg == d.response:
        neg = tuple(int(t) for t in rng.integers(0, vocab_size, size=n_tokens))
    return PairwiseTriple(d.context, d.response, neg)
