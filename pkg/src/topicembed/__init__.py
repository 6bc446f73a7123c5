"""Joint learning of corpus-wide topics and topic-specific word embeddings.

A variational auto-encoder maps each (pivot word, context window) pair to
a Gaussian posterior over a latent semantic vector; the decoder
reconstructs the pivot directly and the context words through a mixture
of corpus-wide topics. Training the two routes jointly yields both
interpretable topics and context-dependent word embeddings.
"""

from .corpus import (
    CorpusStats,
    TrainingInstance,
    Vocabulary,
    build_vocab,
    extract_windows,
    minibatch_iter,
    tokenize,
)
from .model import GaussianPosterior, Model, ModelConfig, TopicDistribution, kl_to_prior, reparameterize
from .trainer import TrainConfig, TrainReport, TrainingDiverged, fit, train

__version__ = "0.1.0"

__all__ = [
    "CorpusStats",
    "GaussianPosterior",
    "Model",
    "ModelConfig",
    "TopicDistribution",
    "TrainConfig",
    "TrainReport",
    "TrainingDiverged",
    "TrainingInstance",
    "Vocabulary",
    "build_vocab",
    "extract_windows",
    "fit",
    "kl_to_prior",
    "minibatch_iter",
    "reparameterize",
    "tokenize",
    "train",
    "__version__",
]
