"""Shared fixtures: synthetic corpora and trained models.

The synthetic corpus has three ground-truth topics with disjoint 30-word
vocabularies; every document samples one topic. A planted ambiguous word
("amb") occurs equally often in topic-0 and topic-1 documents, giving a
controlled polysemy case. Heavy fixtures are session-scoped.
"""

import numpy as np
import pytest

from topicembed.corpus import build_vocab, corpus_instances
from topicembed.model import ModelConfig
from topicembed.trainer import TrainConfig, train

N_TOPICS = 3
WORDS_PER_TOPIC = 30
DOC_LEN = 40
PLANTED = "amb"


def topic_vocabularies():
    return [
        [f"t{k}w{i:02d}" for i in range(WORDS_PER_TOPIC)] for k in range(N_TOPICS)
    ]


def make_synthetic_corpus(n_docs, seed, planted=True):
    """Documents of DOC_LEN tokens drawn from one topic's vocabulary each.

    In topic-0 and topic-1 documents exactly two positions are replaced by
    the planted ambiguous word, so its occurrences split evenly between
    the two topics.
    """
    rng = np.random.default_rng(seed)
    vocabs = topic_vocabularies()
    docs, labels = [], []
    for d in range(n_docs):
        k = d % N_TOPICS
        words = rng.choice(vocabs[k], size=DOC_LEN).tolist()
        if planted and k in (0, 1):
            for pos in rng.choice(DOC_LEN, size=2, replace=False):
                words[pos] = PLANTED
        docs.append(words)
        labels.append(k)
    return docs, labels


@pytest.fixture(scope="session")
def synth_corpus():
    docs, labels = make_synthetic_corpus(n_docs=5000, seed=7)
    return docs, labels


@pytest.fixture(scope="session")
def synth_vocab(synth_corpus):
    docs, _ = synth_corpus
    return build_vocab(docs, 200)


@pytest.fixture(scope="session")
def synth_instances(synth_corpus, synth_vocab):
    docs, _ = synth_corpus
    instances, _ = corpus_instances(docs, synth_vocab, 10)
    return instances


@pytest.fixture(scope="session")
def synth_model(synth_instances, synth_vocab):
    """Model trained to convergence on the synthetic corpus (~2 min)."""
    cfg = ModelConfig(
        vocab_size=len(synth_vocab), latent_dim=16, n_topics=3, hidden_dim=64
    )
    tcfg = TrainConfig(
        eta0=0.002,
        lr_decay=0.95,
        max_iter=30,
        batch_size=2048,
        seed=3,
        optimizer="adam",
        convergence_tol=0.0,
    )
    model, report = train(synth_instances, cfg, tcfg)
    return model, report


@pytest.fixture(scope="session")
def mini_model():
    """A quickly-trained small model for plumbing tests (seconds)."""
    docs, _ = make_synthetic_corpus(n_docs=300, seed=11)
    vocab = build_vocab(docs, 200)
    instances, _ = corpus_instances(docs, vocab, 10)
    cfg = ModelConfig(vocab_size=len(vocab), latent_dim=8, n_topics=3, hidden_dim=24)
    tcfg = TrainConfig(
        eta0=0.003, lr_decay=0.95, max_iter=4, batch_size=1024, seed=5,
        optimizer="adam", convergence_tol=0.0,
    )
    model, _ = train(instances, cfg, tcfg)
    return model, vocab, instances
