"""The generative model: Gaussian encoder, twin decoder heads, ELBO.

Each training instance is a pivot word with a bag-of-words context
window. The encoder maps the pair to a diagonal Gaussian posterior over
a latent semantic vector z. The decoder reconstructs the pivot directly
from z and reconstructs context words through a mixture over corpus-wide
topics: z is squashed onto the topic simplex and mixed with a T x V
topic-word matrix whose softmaxed rows are the learned topics.

All functions run on minibatches internally; single-instance entry
points wrap a batch of one so there is exactly one numerical code path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

# All network parameters start from N(0, 0.1 variance).
INIT_STD = np.sqrt(0.1)


@dataclass
class ModelConfig:
    vocab_size: int
    latent_dim: int = 100
    n_topics: int = 50
    hidden_dim: int = 256
    n_samples: int = 1

    def __post_init__(self):
        for name in ("vocab_size", "latent_dim", "n_topics", "hidden_dim", "n_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self):
        return {
            "vocab_size": self.vocab_size,
            "latent_dim": self.latent_dim,
            "n_topics": self.n_topics,
            "hidden_dim": self.hidden_dim,
            "n_samples": self.n_samples,
        }


@dataclass
class GaussianPosterior:
    """Per-occurrence posterior; mu doubles as the contextual embedding."""

    mu: np.ndarray
    sigma: np.ndarray


@dataclass
class TopicDistribution:
    """A point on the topic simplex."""

    zeta: np.ndarray

    @property
    def argmax(self):
        return int(np.argmax(self.zeta))


@dataclass
class Batch:
    """Instances packed into flat arrays; contexts in CSR-like layout."""

    pivot_ids: np.ndarray  # (B,)
    ctx_ids: np.ndarray    # (K,) vocabulary ids, all instances concatenated
    ctx_counts: np.ndarray # (K,) raw window counts
    ctx_norm: np.ndarray   # (K,) counts scaled to sum to 1 per instance
    row_idx: np.ndarray    # (K,) owning instance of each context entry
    size: int


@dataclass
class PackedInstances:
    """The whole instance list in one CSR block; sliced per minibatch."""

    pivot_ids: np.ndarray  # (N,)
    indptr: np.ndarray     # (N+1,) context-entry offsets per instance
    ctx_ids: np.ndarray
    ctx_counts: np.ndarray
    ctx_norm: np.ndarray

    def __len__(self):
        return self.pivot_ids.shape[0]


def pack_all(instances):
    pivot_ids = np.fromiter((inst.pivot_id for inst in instances), dtype=np.intp)
    lens = np.fromiter((inst.context_ids.size for inst in instances), dtype=np.intp)
    indptr = np.zeros(len(instances) + 1, dtype=np.intp)
    np.cumsum(lens, out=indptr[1:])
    if indptr[-1]:
        ctx_ids = np.concatenate([inst.context_ids for inst in instances])
        ctx_counts = np.concatenate(
            [inst.context_counts for inst in instances]
        ).astype(np.float64)
        owner = np.repeat(np.arange(len(instances)), lens)
        sums = np.bincount(owner, weights=ctx_counts, minlength=len(instances))
        ctx_norm = ctx_counts / np.repeat(np.maximum(sums, 1.0), lens)
    else:
        ctx_ids = np.empty(0, dtype=np.int64)
        ctx_counts = np.empty(0)
        ctx_norm = np.empty(0)
    return PackedInstances(pivot_ids, indptr, ctx_ids.astype(np.intp), ctx_counts, ctx_norm)


def take_batch(packed, idx):
    """Assemble the Batch for a subset of packed instances (vectorized)."""
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
        ctx_ids, ctx_counts, ctx_norm = (
            packed.ctx_ids[pos],
            packed.ctx_counts[pos],
            packed.ctx_norm[pos],
        )
    else:
        row_idx = np.empty(0, dtype=np.intp)
        ctx_ids, ctx_counts, ctx_norm = (
            np.empty(0, dtype=np.intp),
            np.empty(0),
            np.empty(0),
        )
    return Batch(
        pivot_ids=packed.pivot_ids[idx],
        ctx_ids=ctx_ids,
        ctx_counts=ctx_counts,
        ctx_norm=ctx_norm,
        row_idx=row_idx,
        size=idx.size,
    )


def pack_batch(instances):
    packed = pack_all(instances)
    return take_batch(packed, np.arange(len(instances)))


def reparameterize(posterior, eps):
    """z = mu + sigma * eps; eps comes from the seeded noise stream."""
    return posterior.mu + posterior.sigma * eps


def kl_to_prior(posterior):
    """KL(N(mu, diag sigma^2) || N(0, I)), in closed form. Non-negative."""
    mu, sigma = posterior.mu, posterior.sigma
    return float(0.5 * np.sum(mu * mu + sigma * sigma - 1.0 - np.log(sigma * sigma)))


def _kl_from_moments(mu, log_sigma):
    """Closed-form KL to the standard normal prior, per batch row."""
    inner = mu * mu + ad.exp(log_sigma * 2.0) - 1.0 - log_sigma * 2.0
    return ad.tsum(inner, axis=1) * 0.5


class Model:
    """Parameters plus every forward computation of the bag-of-words model.

    Parameter tensors, by name and shape (V vocab, H hidden, D latent,
    T topics):

      enc_pivot_w   (V, H)  pivot one-hot -> hidden (stored as row lookup)
      enc_context_w (V, H)  normalized context BOW -> hidden
      enc_hidden_b  (H,)
      enc_mu_w      (H, D), enc_mu_b (D,)      posterior mean head
      enc_logsig_w  (H, D), enc_logsig_b (D,)  log-sigma head (exponentiated)
      dec_pivot_w   (D, V), dec_pivot_b (V,)   pivot reconstruction head
      dec_topic_w   (D, T), dec_topic_b (T,)   z -> topic logits
      topic_word_w  (T, V)                     corpus-wide topic matrix
      dec_context_b (V,)                       context word bias
    """

    mode = "bow"

    def __init__(self, config, params=None, rng=None):
        self.config = config
        if params is not None:
            self.params = params
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            self.params = self._init_params(config, rng)

    @staticmethod
    def _init_params(cfg, rng):
        shapes = Model.param_shapes(cfg)
        return {
            name: Tensor(rng.normal(0.0, INIT_STD, size=shape), name=name)
            for name, shape in shapes.items()
        }

    @staticmethod
    def param_shapes(cfg):
        v, h, d, t = cfg.vocab_size, cfg.hidden_dim, cfg.latent_dim, cfg.n_topics
        return {
            "enc_pivot_w": (v, h),
            "enc_context_w": (v, h),
            "enc_hidden_b": (h,),
            "enc_mu_w": (h, d),
            "enc_mu_b": (d,),
            "enc_logsig_w": (h, d),
            "enc_logsig_b": (d,),
            "dec_pivot_w": (d, v),
            "dec_pivot_b": (v,),
            "dec_topic_w": (d, t),
            "dec_topic_b": (t,),
            "topic_word_w": (t, v),
            "dec_context_b": (v,),
        }

    # -- graph-building forward passes (Tensor in, Tensor out) --

    def pack(self, instances):
        return pack_batch(instances)

    def pack_all(self, instances):
        return pack_all(instances)

    def take(self, packed, idx):
        return take_batch(packed, idx)

    def posterior_t(self, batch):
        """Encoder forward: (mu, sigma, log_sigma) tensors of shape (B, D)."""
        p = self.params
        hidden = ad.gather_rows(p["enc_pivot_w"], batch.pivot_ids)
        if batch.ctx_ids.size:
            hidden = hidden + ad.rows_weighted_sum(
                p["enc_context_w"], batch.ctx_ids, batch.ctx_norm, batch.row_idx, batch.size
            )
        pi = ad.tanh(hidden + p["enc_hidden_b"])
        mu = ad.affine(pi, p["enc_mu_w"], p["enc_mu_b"])
        log_sigma = ad.affine(pi, p["enc_logsig_w"], p["enc_logsig_b"])
        return mu, ad.exp(log_sigma), log_sigma

    def pivot_logprob_t(self, z):
        p = self.params
        return ad.log_softmax(ad.affine(z, p["dec_pivot_w"], p["dec_pivot_b"]))

    def topic_mixture_t(self, z):
        p = self.params
        return ad.softmax(ad.affine(z, p["dec_topic_w"], p["dec_topic_b"]))

    def context_logprob_t(self, zeta):
        p = self.params
        return ad.log_softmax(ad.affine(zeta, p["topic_word_w"], p["dec_context_b"]))

    def reconstruction_t(self, batch, z):
        """Joint log-likelihood of pivot and context counts, per batch row."""
        pivot_ll = ad.take_per_row(self.pivot_logprob_t(z), batch.pivot_ids)
        ctx_logp = self.context_logprob_t(self.topic_mixture_t(z))
        if batch.ctx_ids.size:
            ctx_ll = ad.sparse_weighted_rowsum(
                ctx_logp, batch.ctx_ids, batch.ctx_counts, batch.row_idx, batch.size
            )
            return pivot_ll + ctx_ll
        return pivot_ll

    def loss_parts(self, batch, eps):
        """Mean negative ELBO over a batch, split into its two terms.

        ``eps`` has shape (S, B, D); the reconstruction expectation is the
        average over the S samples. Returns scalar tensors
        (loss, mean negative log-likelihood, mean KL) with
        loss = nll + kl.
        """
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

    # -- plain-value entry points (numpy in, numpy out) --

    def encode(self, instance):
        """Posterior parameters for one (pivot, context window) occurrence."""
        mu, sigma, _ = self.posterior_t(self.pack([instance]))
        return GaussianPosterior(mu.data[0].copy(), sigma.data[0].copy())

    def encode_batch(self, instances):
        """Posterior means and sigmas for many instances, (N, D) arrays."""
        mu, sigma, _ = self.posterior_t(self.pack(instances))
        return mu.data.copy(), sigma.data.copy()

    def decode_pivot(self, z):
        """Probability of each vocabulary word as the pivot given z."""
        p = self.params
        logits = ad.affine(Tensor(np.atleast_2d(z)), p["dec_pivot_w"], p["dec_pivot_b"])
        return ad.softmax(logits).data[0].copy()

    def topic_transform(self, z):
        """Squash z onto the topic simplex."""
        zeta = self.topic_mixture_t(Tensor(np.atleast_2d(z)))
        return TopicDistribution(zeta.data[0].copy())

    def topic_transform_batch(self, z):
        return self.topic_mixture_t(Tensor(np.atleast_2d(z))).data.copy()

    def decode_context(self, topic_dist):
        """Context-word distribution for a point on the topic simplex."""
        zeta = np.atleast_2d(topic_dist.zeta)
        return np.exp(self.context_logprob_t(Tensor(zeta)).data[0])

    def log_likelihood(self, instance, z):
        """log p(pivot, context counts | z) for one instance."""
        batch = self.pack([instance])
        return float(self.reconstruction_t(batch, Tensor(np.atleast_2d(z))).data[0])

    def elbo(self, instance, eps_samples):
        """Monte-Carlo ELBO for one instance; eps_samples has shape (S, D).

        The S samples are laid out as a replicated batch, so the average
        over samples falls out of the batch mean (the instance's KL term is
        identical in every row).
        """
        eps = np.asarray(eps_samples, dtype=np.float64)
        if eps.ndim == 1:
            eps = eps[None, :]
        batch = self.pack([instance] * eps.shape[0])
        loss, _, _ = self.loss_parts(batch, eps[None, :, :])
        return -float(loss.data)

    # -- persistence helpers --

    def param_arrays(self):
        return {name: t.data for name, t in self.params.items()}

    @classmethod
    def from_arrays(cls, config, arrays):
        expected = cls.param_shapes(config)
        if set(arrays) != set(expected):
            raise ValueError("parameter names do not match the model layout")
        params = {}
        for name, shape in expected.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
            params[name] = Tensor(arr, name=name)
        return cls(config, params=params)
