"""Dense-embedding mode: reconstruct pre-trained vectors instead of words.

Instead of categorical reconstruction over the vocabulary, both decoder
heads emit vectors in the input embedding space and are scored by the
cosine of half the angle to their targets. The half-angle density
0.5*cos(theta/2) integrates to 1 over [0, pi], peaks at theta=0, and is
monotone in the similarity, so maximizing it pulls reconstructions onto
their targets. Input vectors come from a word2vec-format text file
(optionally keyed per occurrence as ``token@docid:pos``) and are
L2-normalized on load. The Gaussian encoder, topic simplex, and KL term
are unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .inference import read_word2vec
from .model import INIT_STD, GaussianPosterior, ModelConfig, TopicDistribution, _kl_from_moments

# One reconstruction factor never contributes less than this log-score;
# keeps numerically antiparallel pairs from driving the loss to -inf.
LOG_FLOOR = -30.0


def cos_half_angle(u, v):
    """cos of half the angle between u and v; 1 iff parallel, 0 iff opposed.

    Computed via the chord identity cos(theta/2) = |u/|u| + v/|v|| / 2,
    which equals cos(arccos(cos_sim)/2) but stays exact at both endpoints
    (arccos loses half the significant digits near +-1).
    """
    u, v = np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cos_half_angle is undefined for a zero vector")
    return float(min(np.linalg.norm(u / nu + v / nv) / 2.0, 1.0))


def half_angle_density(theta):
    """The reconstruction score as a density over the angle, 0.5*cos(theta/2)."""
    return 0.5 * np.cos(0.5 * np.asarray(theta, dtype=np.float64))


def dense_log_likelihood(targets, reconstructions, floor=LOG_FLOOR):
    """Sum of log half-angle-cosine scores over paired vectors.

    ``targets`` and ``reconstructions`` are equal-length sequences (pivot
    plus its context vectors, each paired with its reconstruction). Each
    factor's log is clamped at ``floor``.
    """
    if len(targets) != len(reconstructions):
        raise ValueError("targets and reconstructions must pair up one-to-one")
    total = 0.0
    for t, r in zip(targets, reconstructions):
        score = cos_half_angle(t, r)
        total += max(np.log(score), floor) if score > 0.0 else floor
    return float(total)


@dataclass
class DenseConfig(ModelConfig):
    embed_dim: int = 100

    def __post_init__(self):
        super().__post_init__()
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")

    def to_dict(self):
        d = super().to_dict()
        d["embed_dim"] = self.embed_dim
        return d


@dataclass
class DenseVectorFile:
    """Unit-normalized input vectors keyed by token or token@docid:pos."""

    vectors: dict
    dim: int

    @classmethod
    def load(cls, path):
        raw = read_word2vec(path)
        if not raw:
            raise ValueError(f"{path}: no vectors")
        dim = None
        vectors = {}
        for key, vec in raw.items():
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise ValueError(f"{path}: inconsistent vector dimensions")
            norm = np.linalg.norm(vec)
            if norm == 0.0:
                raise ValueError(f"{path}: zero vector for {key!r}")
            vectors[key] = vec / norm
        return cls(vectors=vectors, dim=dim)

    def lookup(self, token, doc_idx=None, pos=None):
        """Per-occurrence vector if present, else the token-level vector."""
        if doc_idx is not None and pos is not None:
            vec = self.vectors.get(f"{token}@{doc_idx}:{pos}")
            if vec is not None:
                return vec
        return self.vectors.get(token)


@dataclass
class DenseInstance:
    """A pivot occurrence with its own and its context's target vectors."""

    pivot_id: int
    pivot_vec: np.ndarray
    context_vecs: np.ndarray  # (C, E); C may be 0


@dataclass
class DenseBatch:
    pivot_ids: np.ndarray
    pivot_vecs: np.ndarray   # (B, E)
    ctx_mean: np.ndarray     # (B, E) mean context vector, zero when C = 0
    target_vecs: np.ndarray  # (K, E) flattened context targets
    row_idx: np.ndarray      # (K,)
    size: int


@dataclass
class DensePacked:
    pivot_ids: np.ndarray
    pivot_vecs: np.ndarray
    ctx_mean: np.ndarray
    indptr: np.ndarray
    target_vecs: np.ndarray

    def __len__(self):
        return self.pivot_ids.shape[0]


def build_dense_instances(token_docs, vocab, vector_file, window_size):
    """Windowed instances over tokens that are in-vocabulary and vectored.

    Tokens missing from either the vocabulary or the vector file are
    dropped before windowing, mirroring the OOV policy of the BOW mode.
    """
    half = window_size // 2
    instances = []
    for doc_idx, doc in enumerate(token_docs):
        kept_ids, kept_vecs = [], []
        for pos, token in enumerate(doc):
            if token not in vocab:
                continue
            vec = vector_file.lookup(token, doc_idx, pos)
            if vec is None:
                continue
            kept_ids.append(vocab.token_to_id[token])
            kept_vecs.append(vec)
        n = len(kept_ids)
        for i in range(n):
            lo, hi = max(0, i - half), min(n, i + half + 1)
            ctx = kept_vecs[lo:i] + kept_vecs[i + 1 : hi]
            instances.append(
                DenseInstance(
                    pivot_id=kept_ids[i],
                    pivot_vec=kept_vecs[i],
                    context_vecs=np.array(ctx) if ctx else np.empty((0, len(kept_vecs[i]))),
                )
            )
    return instances


class DenseModel:
    """Encoder/decoder over dense input vectors with half-angle scoring.

    Parameter layout mirrors the BOW model except at the boundaries
    (E = input embedding dim):

      enc_in_w      (2E, H)  concat(pivot vec, mean context vec) -> hidden
      dec_pivot_w   (D, E), dec_pivot_b (E,)   pivot reconstruction
      dec_proj_w    (V, E), dec_proj_b (E,)    topic path projected to E
    """

    mode = "dense"

    def __init__(self, config, params=None, rng=None):
        self.config = config
        if params is not None:
            self.params = params
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            self.params = {
                name: Tensor(rng.normal(0.0, INIT_STD, size=shape), name=name)
                for name, shape in self.param_shapes(config).items()
            }

    @staticmethod
    def param_shapes(cfg):
        e, h, d, t, v = (
            cfg.embed_dim,
            cfg.hidden_dim,
            cfg.latent_dim,
            cfg.n_topics,
            cfg.vocab_size,
        )
        return {
            "enc_in_w": (2 * e, h),
            "enc_hidden_b": (h,),
            "enc_mu_w": (h, d),
            "enc_mu_b": (d,),
            "enc_logsig_w": (h, d),
            "enc_logsig_b": (d,),
            "dec_pivot_w": (d, e),
            "dec_pivot_b": (e,),
            "dec_topic_w": (d, t),
            "dec_topic_b": (t,),
            "topic_word_w": (t, v),
            "dec_context_b": (v,),
            "dec_proj_w": (v, e),
            "dec_proj_b": (e,),
        }

    def pack_all(self, instances):
        e = self.config.embed_dim
        pivot_ids = np.fromiter((i.pivot_id for i in instances), dtype=np.intp)
        pivot_vecs = np.stack([i.pivot_vec for i in instances]) if instances else np.empty((0, e))
        ctx_mean = np.zeros((len(instances), e))
        lens = np.fromiter((i.context_vecs.shape[0] for i in instances), dtype=np.intp)
        indptr = np.zeros(len(instances) + 1, dtype=np.intp)
        np.cumsum(lens, out=indptr[1:])
        targets = [i.context_vecs for i in instances if i.context_vecs.shape[0]]
        for b, inst in enumerate(instances):
            if inst.context_vecs.shape[0]:
                ctx_mean[b] = inst.context_vecs.mean(axis=0)
        return DensePacked(
            pivot_ids=pivot_ids,
            pivot_vecs=pivot_vecs,
            ctx_mean=ctx_mean,
            indptr=indptr,
            target_vecs=np.concatenate(targets) if targets else np.empty((0, e)),
        )

    def take(self, packed, idx):
        idx = np.asarray(idx, dtype=np.intp)
        lens = packed.indptr[idx + 1] - packed.indptr[idx]
        total = int(lens.sum())
        if total:
            out_start = np.cumsum(lens) - lens
            pos = (
                np.arange(total)
                - np.repeat(out_start, lens)
                + np.repeat(packed.indptr[idx], lens)
            )
            row_idx = np.repeat(np.arange(idx.size), lens)
            targets = packed.target_vecs[pos]
        else:
            row_idx = np.empty(0, dtype=np.intp)
            targets = np.empty((0, packed.pivot_vecs.shape[1]))
        return DenseBatch(
            pivot_ids=packed.pivot_ids[idx],
            pivot_vecs=packed.pivot_vecs[idx],
            ctx_mean=packed.ctx_mean[idx],
            target_vecs=targets,
            row_idx=row_idx,
            size=idx.size,
        )

    def pack(self, instances):
        return self.take(self.pack_all(instances), np.arange(len(instances)))

    def posterior_t(self, batch):
        p = self.params
        x = Tensor(np.concatenate([batch.pivot_vecs, batch.ctx_mean], axis=1))
        pi = ad.tanh(ad.affine(x, p["enc_in_w"], p["enc_hidden_b"]))
        mu = ad.affine(pi, p["enc_mu_w"], p["enc_mu_b"])
        log_sigma = ad.affine(pi, p["enc_logsig_w"], p["enc_logsig_b"])
        return mu, ad.exp(log_sigma), log_sigma

    def topic_mixture_t(self, z):
        p = self.params
        return ad.softmax(ad.affine(z, p["dec_topic_w"], p["dec_topic_b"]))

    def _log_half_cos_rows(self, recon, targets):
        """Per-row log cos(angle/2) between reconstructions and unit targets.

        Uses cos(theta/2) = sqrt((1+cos theta)/2), clamped so one factor
        never goes below LOG_FLOOR.
        """
        tgt = Tensor(targets)
        dot = ad.tsum(recon * tgt, axis=1)
        norms = ad.clamp_min(ad.sqrt(ad.tsum(recon * recon, axis=1)), 1e-12)
        tgt_norms = np.linalg.norm(targets, axis=1) if targets.size else np.ones(0)
        c = dot / (norms * Tensor(np.maximum(tgt_norms, 1e-12)))
        half_sq = (c + 1.0) * 0.5
        return ad.log(ad.clamp_min(half_sq, float(np.exp(2.0 * LOG_FLOOR)))) * 0.5

    def reconstruction_t(self, batch, z):
        p = self.params
        pivot_recon = ad.affine(z, p["dec_pivot_w"], p["dec_pivot_b"])
        ll = self._log_half_cos_rows(pivot_recon, batch.pivot_vecs)
        if batch.target_vecs.shape[0]:
            zeta = self.topic_mixture_t(z)
            mix = ad.affine(zeta, p["topic_word_w"], p["dec_context_b"])
            ctx_recon = ad.affine(mix, p["dec_proj_w"], p["dec_proj_b"])
            per_target = self._log_half_cos_rows(
                ad.gather_rows(ctx_recon, batch.row_idx), batch.target_vecs
            )
            ll = ll + ad.segment_sum(per_target, batch.row_idx, batch.size)
        return ll

    def loss_parts(self, batch, eps):
        """Mean negative ELBO with the half-angle reconstruction term."""
        mu, sigma, log_sigma = self.posterior_t(batch)
        kl = _kl_from_moments(mu, log_sigma)
        recon = None
        for s in range(eps.shape[0]):
            z = mu + sigma * Tensor(eps[s])
            r = self.reconstruction_t(batch, z)
            recon = r if recon is None else recon + r
        recon = recon * (1.0 / eps.shape[0])
        loss = ad.tmean(kl - recon)
        return loss, ad.tmean(-recon), ad.tmean(kl)

    # -- inference parity with the BOW model --

    def encode(self, instance):
        mu, sigma, _ = self.posterior_t(self.pack([instance]))
        return GaussianPosterior(mu.data[0].copy(), sigma.data[0].copy())

    def encode_batch(self, instances):
        mu, sigma, _ = self.posterior_t(self.pack(instances))
        return mu.data.copy(), sigma.data.copy()

    def topic_transform(self, z):
        zeta = self.topic_mixture_t(Tensor(np.atleast_2d(z)))
        return TopicDistribution(zeta.data[0].copy())

    def topic_transform_batch(self, z):
        return self.topic_mixture_t(Tensor(np.atleast_2d(z))).data.copy()

    def param_arrays(self):
        return {name: t.data for name, t in self.params.items()}

    @classmethod
    def from_arrays(cls, config, arrays):
        expected = cls.param_shapes(config)
        if set(arrays) != set(expected):
            raise ValueError("parameter names do not match the dense model layout")
        params = {}
        for name, shape in expected.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
            params[name] = Tensor(arr, name=name)
        return cls(config, params=params)
