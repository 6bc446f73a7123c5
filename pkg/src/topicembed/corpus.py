"""Corpus ingestion: tokenization, vocabulary, and training instances.

A corpus is plain UTF-8 text, one document per line. Documents are
tokenized, stopword-filtered, mapped to vocabulary ids (out-of-vocabulary
tokens dropped), and turned into (pivot, context bag-of-words) instances
with a symmetric window.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources

import numpy as np

# Tokens are lowercase alphanumeric runs, with internal apostrophes kept
# so contractions survive as single tokens.
_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z0-9]+)*")


def tokenize(text, stopwords=frozenset()):
    """Lowercase, strip punctuation, drop stopwords; order preserved."""
    return [t for t in _TOKEN_RE.findall(text.lower()) if t not in stopwords]


def default_stopwords():
    """The English stopword list bundled with the package."""
    data = resources.files("topicembed.data").joinpath("stopwords_en.txt").read_text("utf-8")
    return frozenset(line.strip() for line in data.splitlines() if line.strip())


def load_stopwords(path):
    with open(path, encoding="utf-8") as fh:
        return frozenset(line.strip() for line in fh if line.strip())


@dataclass
class Vocabulary:
    """Dense token<->id map, ids assigned in descending frequency order."""

    token_to_id: dict
    id_to_token: list
    frequency: list
    stopword_list: frozenset = frozenset()

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    def encode(self, tokens):
        """Map tokens to ids, silently dropping out-of-vocabulary tokens."""
        t2i = self.token_to_id
        return [t2i[t] for t in tokens if t in t2i]

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_tsv())

    def to_tsv(self):
        lines = [
            f"{tok}\t{i}\t{self.frequency[i]}\n"
            for i, tok in enumerate(self.id_to_token)
        ]
        return "".join(lines)

    def content_hash(self):
        """sha256 of the canonical TSV serialization; stored in checkpoints."""
        return hashlib.sha256(self.to_tsv().encode("utf-8")).hexdigest()

    @classmethod
    def load(cls, path):
        id_to_token, frequency = [], []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                token, idx, freq = line.rstrip("\n").split("\t")
                if int(idx) != len(id_to_token):
                    raise ValueError(f"vocabulary ids must be dense and sorted, got {idx}")
                id_to_token.append(token)
                frequency.append(int(freq))
        return cls(
            token_to_id={t: i for i, t in enumerate(id_to_token)},
            id_to_token=id_to_token,
            frequency=frequency,
        )


def build_vocab(token_docs, max_size, stopwords=frozenset()):
    """Top ``max_size`` tokens by corpus frequency, ties broken lexically.

    ``token_docs`` is an iterable of token lists (already stopword-free if
    produced by ``tokenize``; any stray stopwords are dropped here too).
    """
    if max_size < 1:
        raise ValueError("vocabulary size must be >= 1")
    counts = Counter()
    for doc in token_docs:
        counts.update(doc)
    for sw in stopwords:
        counts.pop(sw, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:max_size]
    id_to_token = [tok for tok, _ in ranked]
    return Vocabulary(
        token_to_id={t: i for i, t in enumerate(id_to_token)},
        id_to_token=id_to_token,
        frequency=[c for _, c in ranked],
        stopword_list=frozenset(stopwords),
    )


@dataclass
class TrainingInstance:
    """A pivot word id plus its context window as a sparse count vector."""

    pivot_id: int
    context_ids: np.ndarray
    context_counts: np.ndarray

    @property
    def total(self):
        """Number of context tokens C; 0 only at degenerate boundaries."""
        return int(self.context_counts.sum())


@dataclass
class CorpusStats:
    n_documents: int = 0
    n_tokens: int = 0
    n_instances: int = 0


def extract_windows(doc_ids, window_size):
    """One instance per position; up to window_size/2 ids on each side.

    The pivot's own position is excluded from its context (other in-window
    occurrences of the same token still count). Contexts truncate at
    document boundaries; single-token documents yield an empty context.
    """
    half = window_size // 2
    out = []
    n = len(doc_ids)
    for i in range(n):
        lo = max(0, i - half)
        hi = min(n, i + half + 1)
        window = Counter(doc_ids[lo:i])
        window.update(doc_ids[i + 1 : hi])
        if window:
            ids = np.fromiter(sorted(window), dtype=np.int64)
            counts = np.fromiter((window[j] for j in sorted(window)), dtype=np.int64)
        else:
            ids = np.empty(0, dtype=np.int64)
            counts = np.empty(0, dtype=np.int64)
        out.append(TrainingInstance(int(doc_ids[i]), ids, counts))
    return out


def corpus_instances(token_docs, vocab, window_size):
    """All training instances of a corpus, in document order, plus stats."""
    instances = []
    stats = CorpusStats()
    for doc in token_docs:
        stats.n_documents += 1
        ids = vocab.encode(doc)
        stats.n_tokens += len(ids)
        instances.extend(extract_windows(ids, window_size))
    stats.n_instances = len(instances)
    return instances, stats


def read_corpus(path, stopwords=frozenset()):
    """Token lists for a one-document-per-line UTF-8 corpus file."""
    docs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            docs.append(tokenize(line, stopwords))
    return docs


def minibatch_iter(instances, batch_size, seed):
    """One epoch of shuffled minibatches under a seeded permutation.

    Every instance appears exactly once; the final short batch is kept.
    The same seed always yields the same batch sequence.
    """
    if batch_size < 1:
        raise ValueError("batch size must be >= 1")
    n = len(instances)
    if n == 0:
        return
    order = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    for start in range(0, n, batch_size):
        yield [instances[i] for i in order[start : start + batch_size]]
