"""Evaluation protocols: word similarity, lexical substitution, coherence.

Word similarity ranks model cosine scores against human gold scores with
Spearman correlation. Lexical substitution picks the candidate whose
embedding best matches the target in context, either with contextual
posteriors or with the balanced-additive score over context-free
vectors. Topic coherence computes sliding-window NPMI vectors for each
topic's top words against a reference corpus and averages pairwise
cosines, with out-of-reference words flagged and scored as zero vectors.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .inference import OOVError, contextual_embed, cosine


# -- Spearman rank correlation --


def average_ranks(values):
    """1-based ranks; tied values share the average of their positions."""
    arr = np.asarray(values, dtype=np.float64)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(arr.size)
    i = 0
    while i < arr.size:
        j = i
        while j + 1 < arr.size and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys):
    """Spearman rho with average ranks for ties."""
    xs, ys = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)
    if xs.size != ys.size:
        raise ValueError("input lists must have equal length")
    if xs.size < 2:
        raise ValueError("need at least two pairs")
    rx, ry = average_ranks(xs), average_ranks(ys)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    denom = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    if denom == 0.0:
        raise ValueError("rank variance is zero; correlation undefined")
    return float((dx * dy).sum() / denom)


# -- word similarity --


@dataclass
class SimBenchmark:
    name: str
    pairs: list  # (word1, word2, gold_score)


@dataclass
class SimResult:
    rho: float
    coverage: float
    n_scored: int
    n_total: int


def read_sim_benchmark(path, name=None):
    """TSV rows `word1<TAB>word2<TAB>score`."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            w1, w2, score = line.rstrip("\n").split("\t")
            pairs.append((w1.lower(), w2.lower(), float(score)))
    return SimBenchmark(name or str(path), pairs)


def eval_word_similarity(benchmark, vectors):
    """Spearman rho of cosine scores vs gold over the covered pairs.

    ``vectors`` maps tokens to context-free embeddings. Pairs with either
    word missing are excluded; coverage reports the retained fraction.
    """
    gold, ours = [], []
    for w1, w2, score in benchmark.pairs:
        if w1 in vectors and w2 in vectors:
            gold.append(score)
            ours.append(cosine(vectors[w1], vectors[w2]))
    if not gold:
        raise ValueError(f"{benchmark.name}: no benchmark pair is covered")
    return SimResult(
        rho=spearman(ours, gold),
        coverage=len(gold) / len(benchmark.pairs),
        n_scored=len(gold),
        n_total=len(benchmark.pairs),
    )


# -- lexical substitution --


@dataclass
class LexsubInstance:
    target: str
    position: int
    tokens: list
    candidates: list
    gold: set


@dataclass
class LexsubResult:
    accuracy: float
    hits: int
    evaluated: int
    skipped: int


def read_lexsub(path):
    """One instance per line:
    target<TAB>position<TAB>tokens (space-sep)<TAB>candidates (comma-sep)<TAB>gold (comma-sep)
    """
    instances = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            target, pos, sentence, cands, gold = line.rstrip("\n").split("\t")
            instances.append(
                LexsubInstance(
                    target=target,
                    position=int(pos),
                    tokens=sentence.split(),
                    candidates=[c for c in cands.split(",") if c],
                    gold={g for g in gold.split(",") if g},
                )
            )
    return instances


def baladd(x, y, context_vectors):
    """Balanced additive similarity of candidate y to target x in context.

    (C * cos(y, x) + sum_c cos(y, w_c)) / (2C) over C context vectors.
    """
    if len(context_vectors) == 0:
        raise ValueError("baladd requires at least one context vector")
    c = len(context_vectors)
    total = c * cosine(y, x)
    for w in context_vectors:
        total += cosine(y, w)
    return total / (2.0 * c)


def eval_lexsub(instances, vocab, model=None, mode="contextual", vectors=None):
    """Accuracy of picking a gold substitute from each candidate list.

    ``contextual`` embeds the target and every candidate against the same
    sentence context and compares posterior means by cosine. ``baladd``
    scores candidates with the balanced additive formula over context-free
    ``vectors``. Instances whose target or entire candidate list is unusable
    are skipped and counted.
    """
    if mode not in ("contextual", "baladd"):
        raise ValueError(f"unknown lexsub mode {mode!r}")
    if mode == "contextual" and model is None:
        raise ValueError("contextual mode requires a trained model")
    if mode == "baladd" and vectors is None:
        raise ValueError("baladd mode requires context-free vectors")

    hits = evaluated = skipped = 0
    for inst in instances:
        context = [t for i, t in enumerate(inst.tokens) if i != inst.position]
        try:
            if mode == "contextual":
                choice = _pick_contextual(inst, context, vocab, model)
            else:
                choice = _pick_baladd(inst, context, vectors)
        except (OOVError, ValueError):
            skipped += 1
            continue
        if choice is None:
            skipped += 1
            continue
        evaluated += 1
        if choice in inst.gold:
            hits += 1
    if evaluated == 0:
        raise ValueError("no lexical substitution instance was usable")
    return LexsubResult(hits / evaluated, hits, evaluated, skipped)


def _pick_contextual(inst, context, vocab, model):
    target = contextual_embed(inst.target, context, vocab, model)
    best, best_score = None, -np.inf
    for cand in inst.candidates:
        if cand not in vocab:
            continue
        emb = contextual_embed(cand, context, vocab, model)
        score = cosine(target.posterior.mu, emb.posterior.mu)
        if score > best_score:
            best, best_score = cand, score
    return best


def _pick_baladd(inst, context, vectors):
    if inst.target not in vectors:
        return None
    ctx_vecs = [vectors[t] for t in context if t in vectors]
    if not ctx_vecs:
        return None
    x = vectors[inst.target]
    best, best_score = None, -np.inf
    for cand in inst.candidates:
        if cand not in vectors:
            continue
        score = baladd(x, vectors[cand], ctx_vecs)
        if score > best_score:
            best, best_score = cand, score
    return best


# -- topic coherence --


@dataclass
class CoherenceResult:
    topic_scores: list
    mean_score: float
    missing_words: list = field(default_factory=list)


def window_cooccurrence(docs, tracked, window):
    """Boolean sliding-window counts for the tracked words.

    A document of length L contributes max(L - window + 1, 1) windows;
    each window counts once toward every tracked word it contains and once
    toward every unordered pair it contains.
    """
    tracked = set(tracked)
    marginal = Counter()
    joint = Counter()
    n_windows = 0
    for doc in docs:
        length = len(doc)
        if length == 0:
            continue
        span = min(window, length)
        n_win = length - span + 1
        n_windows += n_win
        inside = Counter(t for t in doc[:span] if t in tracked)
        for start in range(n_win):
            if start > 0:
                gone = doc[start - 1]
                if gone in tracked:
                    inside[gone] -= 1
                    if inside[gone] == 0:
                        del inside[gone]
                new = doc[start + span - 1]
                if new in tracked:
                    inside[new] += 1
            present = sorted(inside)
            for t in present:
                marginal[t] += 1
            for a, b in combinations(present, 2):
                joint[(a, b)] += 1
    return marginal, joint, n_windows


def npmi_from_counts(joint_count, count_a, count_b, n_windows):
    """Normalized PMI in [-1, 1] from boolean window counts.

    Never-co-occurring pairs sit at the -1 floor (the limiting value of
    the formula); a pair present in every window scores 1.
    """
    if count_a == 0 or count_b == 0 or n_windows == 0:
        return 0.0
    if joint_count == 0:
        return -1.0
    p_ab = joint_count / n_windows
    if p_ab >= 1.0:
        return 1.0
    p_a, p_b = count_a / n_windows, count_b / n_windows
    return float(np.log(p_ab / (p_a * p_b)) / -np.log(p_ab))


def npmi_coherence(topics, reference_docs, window=110):
    """Mean pairwise-cosine NPMI coherence of each topic's top words.

    Each top word gets a vector of NPMI values against every top word of
    its topic (self-NPMI is 1 for words present in the reference). Words
    absent from the reference corpus yield all-zero vectors and are
    reported; cosines involving a zero vector contribute 0.
    """
    tracked = {w for topic in topics for w in topic}
    marginal, joint, n_windows = window_cooccurrence(reference_docs, tracked, window)
    missing = sorted(w for w in tracked if marginal[w] == 0)

    def pairwise(a, b):
        if a == b:
            return 1.0 if marginal[a] > 0 else 0.0
        key = (a, b) if a <= b else (b, a)
        return npmi_from_counts(joint[key], marginal[a], marginal[b], n_windows)

    topic_scores = []
    for words in topics:
        vectors = [
            np.array([pairwise(w, other) for other in words]) for w in words
        ]
        sims = []
        for i, j in combinations(range(len(words)), 2):
            ni, nj = np.linalg.norm(vectors[i]), np.linalg.norm(vectors[j])
            if ni == 0.0 or nj == 0.0:
                sims.append(0.0)
            else:
                sims.append(float(np.dot(vectors[i], vectors[j]) / (ni * nj)))
        topic_scores.append(float(np.mean(sims)) if sims else 0.0)
    return CoherenceResult(
        topic_scores=topic_scores,
        mean_score=float(np.mean(topic_scores)) if topic_scores else 0.0,
        missing_words=missing,
    )
