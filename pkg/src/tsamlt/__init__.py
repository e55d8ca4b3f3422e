"""Episodic few-shot sequence classification.

Per-frame embedding sequences are aligned in time with episode-conditioned
affine warps, summarized as multi-level frame-tuple representations, and
classified against query-specific prototypes with a fused optimal
transport / sequence distance.
"""

from .alignment import TemporalAligner
from .distances import FusionNet, classify_and_loss, exact_ot, seq_distance, sinkhorn
from .episodes import (
    Dataset,
    EmbeddingSequence,
    Episode,
    SyntheticSpec,
    gen_synthetic,
    load_embeddings,
    sample_episode,
    write_embeddings,
)
from .harness import Checkpoint, EvalReport, RunConfig, evaluate, selftest, train
from .model import EpisodeClassifier
from .multilevel import MultiLevelConfig, MultiLevelNet, enumerate_tuples
from .tensor import NonFiniteError, Tape, Tensor

__all__ = [
    "Tensor",
    "Tape",
    "NonFiniteError",
    "Dataset",
    "EmbeddingSequence",
    "Episode",
    "SyntheticSpec",
    "gen_synthetic",
    "sample_episode",
    "load_embeddings",
    "write_embeddings",
    "TemporalAligner",
    "MultiLevelConfig",
    "MultiLevelNet",
    "enumerate_tuples",
    "sinkhorn",
    "exact_ot",
    "seq_distance",
    "FusionNet",
    "classify_and_loss",
    "EpisodeClassifier",
    "RunConfig",
    "Checkpoint",
    "EvalReport",
    "train",
    "evaluate",
    "selftest",
]

__version__ = "0.1.0"
