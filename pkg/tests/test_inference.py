"""Tests for prediction-time embeddings, topic views, and exports."""

import numpy as np
import pytest

from topicembed.corpus import build_vocab, extract_windows
from topicembed.inference import (
    OOVError,
    contextual_embed,
    cosine,
    gaussian_kl,
    read_word2vec,
    sentence_topic_distribution,
    similarity,
    topic_top_words,
    universal_embed,
    word_topic_distribution,
    write_distributions,
    write_topic_table,
    write_word2vec,
    UniversalEmbedding,
)
from topicembed.model import GaussianPosterior, Model, ModelConfig, TopicDistribution


@pytest.fixture(scope="module")
def small_setup():
    docs = [["red", "blue", "green", "red"], ["blue", "red", "yellow"]]
    vocab = build_vocab(docs, 10)
    cfg = ModelConfig(vocab_size=len(vocab), latent_dim=4, n_topics=3, hidden_dim=5)
    model = Model(cfg, rng=np.random.default_rng(13))
    ids = [vocab.encode(d) for d in docs]
    instances = [inst for doc in ids for inst in extract_windows(doc, 4)]
    return docs, vocab, model, instances


class TestContextualEmbed:
    def test_oov_pivot_raises(self, small_setup):
        _, vocab, model, _ = small_setup
        with pytest.raises(OOVError):
            contextual_embed("purple", ["red"], vocab, model)

    def test_empty_context_defined(self, small_setup):
        _, vocab, model, _ = small_setup
        emb = contextual_embed("red", [], vocab, model)
        assert np.isfinite(emb.posterior.mu).all()
        assert emb.topics.zeta.sum() == pytest.approx(1.0, abs=1e-12)

    def test_pure_function(self, small_setup):
        _, vocab, model, _ = small_setup
        a = contextual_embed("red", ["blue", "green"], vocab, model)
        b = contextual_embed("red", ["blue", "green"], vocab, model)
        np.testing.assert_array_equal(a.posterior.mu, b.posterior.mu)
        np.testing.assert_array_equal(a.topics.zeta, b.topics.zeta)

    def test_oov_context_words_dropped(self, small_setup):
        _, vocab, model, _ = small_setup
        with_unknown = contextual_embed("red", ["blue", "zzz"], vocab, model)
        without = contextual_embed("red", ["blue"], vocab, model)
        np.testing.assert_array_equal(with_unknown.posterior.mu, without.posterior.mu)


class TestUniversalEmbed:
    def test_single_occurrence_equals_contextual_mean(self, small_setup):
        _, vocab, model, instances = small_setup
        result = universal_embed(instances, model)
        wid = vocab.token_to_id["green"]
        assert result[wid].count == 1
        (occ,) = [i for i in instances if i.pivot_id == wid]
        np.testing.assert_allclose(result[wid].vector, model.encode(occ).mu, atol=1e-12)

    def test_two_occurrences_take_midpoint(self, small_setup):
        _, vocab, model, instances = small_setup
        wid = vocab.token_to_id["blue"]
        occs = [i for i in instances if i.pivot_id == wid]
        assert len(occs) == 2
        mus = [model.encode(o).mu for o in occs]
        result = universal_embed(instances, model)
        np.testing.assert_allclose(result[wid].vector, (mus[0] + mus[1]) / 2, atol=1e-12)

    def test_matches_two_pass_scan_oracle(self, small_setup):
        _, vocab, model, instances = small_setup
        result = universal_embed(instances, model)
        sums, counts = {}, {}
        for inst in instances:
            mu = model.encode(inst).mu
            sums[inst.pivot_id] = sums.get(inst.pivot_id, 0) + mu
            counts[inst.pivot_id] = counts.get(inst.pivot_id, 0) + 1
        assert set(result) == set(sums)
        for wid in sums:
            np.testing.assert_allclose(result[wid].vector, sums[wid] / counts[wid], atol=1e-12)
            assert result[wid].count == counts[wid]

    def test_invariant_to_document_order(self, small_setup):
        _, _, model, instances = small_setup
        forward = universal_embed(instances, model)
        backward = universal_embed(list(reversed(instances)), model)
        for wid in forward:
            np.testing.assert_allclose(forward[wid].vector, backward[wid].vector, atol=1e-12)


class TestTopicDistributions:
    def test_single_occurrence_word(self, small_setup):
        _, vocab, model, instances = small_setup
        wid = vocab.token_to_id["green"]
        (occ,) = [i for i in instances if i.pivot_id == wid]
        dist = word_topic_distribution("green", instances, vocab, model)
        expected = model.topic_transform(model.encode(occ).mu).zeta
        np.testing.assert_allclose(dist.zeta, expected / expected.sum(), atol=1e-12)

    def test_word_distribution_on_simplex(self, small_setup):
        _, vocab, model, instances = small_setup
        dist = word_topic_distribution("red", instances, vocab, model)
        assert dist.zeta.sum() == pytest.approx(1.0, abs=1e-9)
        assert (dist.zeta > 0).all()

    def test_unseen_word_raises(self, small_setup):
        _, vocab, model, instances = small_setup
        with pytest.raises(KeyError):
            word_topic_distribution("purple", instances, vocab, model)

    def test_sentence_single_token(self, small_setup):
        _, vocab, model, _ = small_setup
        got = sentence_topic_distribution(["red"], vocab, model)
        emb = contextual_embed("red", [], vocab, model)
        np.testing.assert_allclose(got.zeta, emb.topics.zeta, atol=1e-12)

    def test_sentence_permutation_invariant(self, small_setup):
        _, vocab, model, _ = small_setup
        a = sentence_topic_distribution(["red", "blue", "green"], vocab, model)
        b = sentence_topic_distribution(["green", "red", "blue"], vocab, model)
        np.testing.assert_allclose(a.zeta, b.zeta, atol=1e-12)

    def test_sentence_without_vocab_tokens_raises(self, small_setup):
        _, vocab, model, _ = small_setup
        with pytest.raises(ValueError):
            sentence_topic_distribution(["qqq", "zzz"], vocab, model)


class TestTopicTopWords:
    def test_zero_matrix_ties_break_by_id(self, small_setup):
        _, vocab, _, _ = small_setup
        cfg = ModelConfig(vocab_size=len(vocab), latent_dim=4, n_topics=2, hidden_dim=5)
        arrays = {n: np.zeros(s) for n, s in Model.param_shapes(cfg).items()}
        model = Model.from_arrays(cfg, arrays)
        tables = topic_top_words(model, vocab, 3)
        for rows in tables:
            assert [w for w, _ in rows] == vocab.id_to_token[:3]
            for _, p in rows:
                assert p == pytest.approx(1.0 / len(vocab), abs=1e-12)

    def test_probabilities_sorted_non_increasing(self, mini_model):
        model, vocab, _ = mini_model
        for rows in topic_top_words(model, vocab, 10):
            probs = [p for _, p in rows]
            assert all(a >= b for a, b in zip(probs, probs[1:]))

    def test_planted_spikes_recovered(self, small_setup):
        _, vocab, _, _ = small_setup
        cfg = ModelConfig(vocab_size=len(vocab), latent_dim=4, n_topics=2, hidden_dim=5)
        arrays = {n: np.zeros(s) for n, s in Model.param_shapes(cfg).items()}
        arrays["topic_word_w"][0, [2, 0]] = [6.0, 5.0]
        arrays["topic_word_w"][1, [3, 1]] = [6.0, 5.0]
        model = Model.from_arrays(cfg, arrays)
        tables = topic_top_words(model, vocab, 2)
        assert [w for w, _ in tables[0]] == [vocab.id_to_token[2], vocab.id_to_token[0]]
        assert [w for w, _ in tables[1]] == [vocab.id_to_token[3], vocab.id_to_token[1]]

    def test_k_larger_than_vocab_rejected(self, small_setup):
        _, vocab, model, _ = small_setup
        with pytest.raises(ValueError):
            topic_top_words(model, vocab, len(vocab) + 1)


class TestSimilarity:
    def test_cosine_self_is_one(self):
        v = np.array([0.3, -1.0, 2.0])
        assert similarity(v, v, "cosine") == pytest.approx(1.0, abs=1e-12)

    def test_cosine_zero_vector_raises(self):
        with pytest.raises(ValueError):
            similarity(np.zeros(3), np.ones(3), "cosine")

    def test_symmetric_kl_self_is_zero(self):
        p = GaussianPosterior(np.array([0.5, -0.5]), np.array([1.2, 0.8]))
        assert similarity(p, p, "symmetric_kl") == pytest.approx(0.0, abs=1e-12)

    def test_symmetric_kl_negated_and_symmetric(self):
        p = GaussianPosterior(np.array([0.0]), np.array([1.0]))
        q = GaussianPosterior(np.array([2.0]), np.array([0.5]))
        spq = similarity(p, q, "symmetric_kl")
        sqp = similarity(q, p, "symmetric_kl")
        assert spq == pytest.approx(sqp, abs=1e-12)
        assert spq < 0

    def test_gaussian_kl_matches_monte_carlo(self):
        rng = np.random.default_rng(8)
        p = GaussianPosterior(np.array([0.4, -0.2]), np.array([0.9, 1.4]))
        q = GaussianPosterior(np.array([-0.3, 0.1]), np.array([1.1, 0.7]))
        z = p.mu + p.sigma * rng.standard_normal((1_000_000, 2))

        def logpdf(z, g):
            return (-0.5 * ((z - g.mu) / g.sigma) ** 2 - np.log(g.sigma)
                    - 0.5 * np.log(2 * np.pi)).sum(axis=1)

        mc = (logpdf(z, p) - logpdf(z, q)).mean()
        assert gaussian_kl(p, q) == pytest.approx(mc, abs=1e-2)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            similarity(np.ones(2), np.ones(2), "euclid")


class TestExports:
    def test_word2vec_round_trip(self, tmp_path, small_setup):
        _, vocab, model, instances = small_setup
        embeddings = universal_embed(instances, model)
        path = tmp_path / "vectors.txt"
        write_word2vec(path, vocab, embeddings)
        header = path.read_text().splitlines()[0]
        assert header == f"{len(embeddings)} {model.config.latent_dim}"
        loaded = read_word2vec(path)
        assert set(loaded) == {vocab.id_to_token[w] for w in embeddings}
        for wid, emb in embeddings.items():
            np.testing.assert_allclose(
                loaded[vocab.id_to_token[wid]], emb.vector, atol=5e-7
            )

    def test_word2vec_trailing_newline_and_dots(self, tmp_path, small_setup):
        _, vocab, _, _ = small_setup
        emb = {0: UniversalEmbedding(0, np.array([1.5, -0.25]), 1)}
        path = tmp_path / "v.txt"
        write_word2vec(path, vocab, emb)
        text = path.read_text()
        assert text.endswith("\n")
        assert "," not in text

    def test_topic_table_format(self, tmp_path):
        path = tmp_path / "topics.tsv"
        write_topic_table(path, [[("food", 0.5), ("wine", 0.25)], [("car", 0.75)]])
        assert path.read_text() == (
            "0\t0\tfood\t0.5\n0\t1\twine\t0.25\n1\t0\tcar\t0.75\n"
        )

    def test_distribution_csv_format(self, tmp_path):
        path = tmp_path / "dist.csv"
        write_distributions(
            path,
            [("patient", TopicDistribution(np.array([0.25, 0.75]))),
             ("bar", np.array([0.5, 0.5]))],
        )
        lines = path.read_text().splitlines()
        assert lines[0] == "label,topic_0,topic_1"
        assert lines[1] == "patient,0.25,0.75"
        assert lines[2] == "bar,0.5,0.5"
