"""Post-training predictions and exports.

A word occurrence is embedded by its posterior mean; a word type by the
average of those means over every occurrence as pivot. Topic-space views
come from squashing the posterior mean onto the topic simplex (no
sampling at prediction time, so all of this is deterministic).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import TrainingInstance
from .model import TopicDistribution, GaussianPosterior

# Encoder batches this large keep memory flat while scanning a corpus.
_CHUNK = 8192


class OOVError(KeyError):
    """A requested word is not in the model's vocabulary."""


@dataclass
class ContextualEmbedding:
    word_id: int
    posterior: GaussianPosterior
    topics: TopicDistribution


@dataclass
class UniversalEmbedding:
    word_id: int
    vector: np.ndarray
    count: int


def _instance_for(pivot_id, context_ids):
    ctx = np.asarray(sorted(context_ids), dtype=np.int64)
    uniq, counts = (np.unique(ctx, return_counts=True) if ctx.size
                    else (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)))
    return TrainingInstance(pivot_id, uniq, counts.astype(np.int64))


def contextual_embed(pivot, context, vocab, model):
    """Embed one occurrence of ``pivot`` amid ``context`` tokens.

    The topic view is computed from the posterior mean, not a sample.
    Context tokens not in the vocabulary are dropped; an OOV pivot is an
    error.
    """
    if pivot not in vocab:
        raise OOVError(f"{pivot!r} is not in the vocabulary")
    instance = _instance_for(vocab.token_to_id[pivot], vocab.encode(context))
    posterior = model.encode(instance)
    return ContextualEmbedding(
        word_id=instance.pivot_id,
        posterior=posterior,
        topics=model.topic_transform(posterior.mu),
    )


def _posterior_means(instances, model):
    means = np.empty((len(instances), model.config.latent_dim))
    for start in range(0, len(instances), _CHUNK):
        chunk = instances[start : start + _CHUNK]
        mu, _ = model.encode_batch(chunk)
        means[start : start + len(chunk)] = mu
    return means


def universal_embed(instances, model):
    """Average posterior means per word over all its pivot occurrences."""
    means = _posterior_means(instances, model)
    sums = {}
    counts = {}
    for inst, mu in zip(instances, means):
        wid = inst.pivot_id
        if wid in sums:
            sums[wid] += mu
            counts[wid] += 1
        else:
            sums[wid] = mu.copy()
            counts[wid] = 1
    return {
        wid: UniversalEmbedding(wid, sums[wid] / counts[wid], counts[wid])
        for wid in sums
    }


def word_topic_distribution(word, instances, vocab, model):
    """Mean topic distribution of a word over all its pivot occurrences."""
    if word not in vocab:
        raise OOVError(f"{word!r} is not in the vocabulary")
    wid = vocab.token_to_id[word]
    occurrences = [inst for inst in instances if inst.pivot_id == wid]
    if not occurrences:
        raise ValueError(f"{word!r} never occurs as a pivot in this corpus")
    means = _posterior_means(occurrences, model)
    zeta = model.topic_transform_batch(means).mean(axis=0)
    return TopicDistribution(zeta / zeta.sum())


def sentence_topic_distribution(tokens, vocab, model):
    """Topic distribution of a sentence.

    Every in-vocabulary token acts as a pivot with the remaining tokens as
    its context; the per-token distributions are averaged. Contexts are
    bags of words, so token order does not matter.
    """
    ids = vocab.encode(tokens)
    if not ids:
        raise ValueError("sentence contains no in-vocabulary tokens")
    instances = []
    for i, wid in enumerate(ids):
        rest = ids[:i] + ids[i + 1 :]
        instances.append(_instance_for(wid, rest))
    means = _posterior_means(instances, model)
    zeta = model.topic_transform_batch(means).mean(axis=0)
    return TopicDistribution(zeta / zeta.sum())


def topic_top_words(model, vocab, k):
    """Top-k words of each topic by softmaxed weight, ties broken by id."""
    if k > len(vocab):
        raise ValueError("k exceeds the vocabulary size")
    beta = model.params["topic_word_w"].data
    shifted = beta - beta.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    tables = []
    for t in range(beta.shape[0]):
        # stable sort on -prob keeps word-id order within ties
        order = np.argsort(-probs[t], kind="stable")[:k]
        tables.append([(vocab.id_to_token[i], float(probs[t, i])) for i in order])
    return tables


def cosine(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.dot(a, b) / (na * nb))


def gaussian_kl(p, q):
    """KL between diagonal Gaussians KL(p || q)."""
    var_p, var_q = p.sigma**2, q.sigma**2
    return float(
        0.5
        * np.sum(np.log(var_q / var_p) + (var_p + (p.mu - q.mu) ** 2) / var_q - 1.0)
    )


def similarity(a, b, mode="cosine"):
    """Similarity between two embeddings.

    ``cosine`` compares plain vectors (or posterior means); ``symmetric_kl``
    compares Gaussian posteriors and negates the symmetrized divergence so
    that larger is always more similar.
    """
    if mode == "cosine":
        va = a.mu if isinstance(a, GaussianPosterior) else np.asarray(a)
        vb = b.mu if isinstance(b, GaussianPosterior) else np.asarray(b)
        return cosine(va, vb)
    if mode == "symmetric_kl":
        if not isinstance(a, GaussianPosterior) or not isinstance(b, GaussianPosterior):
            raise TypeError("symmetric_kl mode requires Gaussian posteriors")
        return -0.5 * (gaussian_kl(a, b) + gaussian_kl(b, a))
    raise ValueError(f"unknown similarity mode {mode!r}")


# -- file exports (all newline-terminated, locale-independent) --


def write_word2vec(path, vocab, embeddings):
    """word2vec text format: `<count> <dim>` header then one word per line."""
    wids = sorted(embeddings)
    dim = embeddings[wids[0]].vector.shape[0] if wids else 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(wids)} {dim}\n")
        for wid in wids:
            vec = " ".join(f"{x:.6f}" for x in embeddings[wid].vector)
            fh.write(f"{vocab.id_to_token[wid]} {vec}\n")


def read_word2vec(path):
    """Inverse of ``write_word2vec``: token -> float64 vector."""
    vectors = {}
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().split()
        if len(first) != 2:
            raise ValueError(f"{path}: missing word2vec header")
        count, dim = int(first[0]), int(first[1])
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise ValueError(f"{path}: bad vector row for {parts[0]!r}")
            vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
    if len(vectors) != count:
        raise ValueError(f"{path}: header claims {count} rows, found {len(vectors)}")
    return vectors


def write_topic_table(path, tables):
    """TSV rows `topic_id<TAB>rank<TAB>word<TAB>prob`."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t, rows in enumerate(tables):
            for rank, (word, prob) in enumerate(rows):
                fh.write(f"{t}\t{rank}\t{word}\t{prob:.8g}\n")


def write_distributions(path, labeled_distributions):
    """CSV rows `label,topic_0,...,topic_{T-1}` for (label, zeta) pairs."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        first = True
        for label, dist in labeled_distributions:
            zeta = dist.zeta if isinstance(dist, TopicDistribution) else np.asarray(dist)
            if first:
                header = ",".join(f"topic_{t}" for t in range(zeta.shape[0]))
                fh.write(f"label,{header}\n")
                first = False
            vals = ",".join(f"{x:.8g}" for x in zeta)
            fh.write(f"{label},{vals}\n")
