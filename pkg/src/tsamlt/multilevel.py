"""Multi-level tuple representations and query-specific class prototypes.

Frames are first lifted to a model space (shared linear map plus a
sinusoidal position code).  For each cardinality w in use, all C(M, w)
strictly-increasing frame tuples are embedded by averaging their member
frames, then mixed down to a small set of learned tuple representations.
The per-cardinality blocks are concatenated, ascending in w, into one
multi-level representation per video.

A single set of key/query/value projections is shared by every
cardinality; a query video's rows attend over all support tuple rows of a
class, and the attention-weighted support values form that query's
class prototype.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import tensor as T
from .nn import LayerNorm, Linear, Module
from .tensor import Tensor

__all__ = [
    "MultiLevelConfig",
    "MultiLevelRep",
    "MultiLevelNet",
    "enumerate_tuples",
    "tuple_count",
    "tuple_mean_matrix",
    "sinusoidal_positions",
    "reduce_tuples",
    "attention_scores",
    "prototype",
]


def tuple_count(m: int, w: int) -> int:
    return math.comb(m, w)


def enumerate_tuples(m: int, w: int) -> list[tuple[int, ...]]:
    """All strictly increasing w-tuples of frame indices 0..m-1.

    Lexicographic order, exactly C(m, w) entries.
    """
    if not 1 <= w <= m:
        raise ValueError(f"cardinality {w} out of range for {m} frames")
    return list(itertools.combinations(range(m), w))


@lru_cache(maxsize=None)
def _mean_matrix(m: int, w: int) -> np.ndarray:
    rows = enumerate_tuples(m, w)
    a = np.zeros((len(rows), m))
    for r, idx in enumerate(rows):
        a[r, list(idx)] = 1.0 / w
    return a


def tuple_mean_matrix(m: int, w: int) -> np.ndarray:
    """(C(m,w), m) matrix averaging each tuple's member frames."""
    return _mean_matrix(m, w).copy()


def sinusoidal_positions(m: int, dim: int) -> np.ndarray:
    """Sinusoidal code of the absolute frame positions 1..m into `dim`."""
    pos = np.arange(1, m + 1, dtype=np.float64)[:, None]
    pairs = (dim + 1) // 2
    div = np.power(10000.0, 2.0 * np.arange(pairs) / dim)[None, :]
    table = np.zeros((m, 2 * pairs))
    table[:, 0::2] = np.sin(pos / div)
    table[:, 1::2] = np.cos(pos / div)
    return table[:, :dim]


@dataclass(frozen=True)
class MultiLevelConfig:
    """Which cardinalities are in use and how many representations each keeps."""

    cardinalities: tuple[int, ...] = (1, 2, 3, 4)
    tuple_reps: tuple[int, ...] = (8, 4, 3, 2)
    dim_model: int = 128
    dim_k: int = 64
    dim_v: int = 64
    pe: bool = True

    def __post_init__(self):
        if len(self.cardinalities) != len(self.tuple_reps):
            raise ValueError("cardinalities and tuple_reps must pair up")
        if not self.cardinalities:
            raise ValueError("need at least one cardinality")
        pairs = sorted(zip(self.cardinalities, self.tuple_reps))
        ws = tuple(w for w, _ in pairs)
        if len(set(ws)) != len(ws):
            raise ValueError("duplicate cardinality")
        object.__setattr__(self, "cardinalities", ws)
        object.__setattr__(self, "tuple_reps", tuple(r for _, r in pairs))
        if min(self.dim_model, self.dim_k, self.dim_v) < 2:
            raise ValueError("model dims must be >= 2")

    def validate_frames(self, m: int) -> None:
        for w, r in zip(self.cardinalities, self.tuple_reps):
            if not 1 <= w <= m:
                raise ValueError(f"cardinality {w} out of range for M={m}")
            if not 1 <= r <= tuple_count(m, w):
                raise ValueError(
                    f"{r} representations for cardinality {w} exceeds C({m},{w})"
                )

    @property
    def total_rows(self) -> int:
        return sum(self.tuple_reps)

    def blocks(self) -> tuple[tuple[int, int, int], ...]:
        """(cardinality, start row, stop row) per level, ascending in w."""
        out, start = [], 0
        for w, r in zip(self.cardinalities, self.tuple_reps):
            out.append((w, start, start + r))
            start += r
        return tuple(out)


@dataclass
class MultiLevelRep:
    """A video's stacked tuple representations with level boundaries."""

    rows: Tensor
    blocks: tuple[tuple[int, int, int], ...]

    def level(self, w: int) -> Tensor:
        for ww, start, stop in self.blocks:
            if ww == w:
                return self.rows[start:stop]
        raise KeyError(f"no level of cardinality {w}")


def reduce_tuples(embeddings: Tensor, mix: Tensor) -> Tensor:
    """Mix C(M,w) tuple embeddings down to a smaller set, per channel."""
    if mix.shape[1] != embeddings.shape[0]:
        raise ValueError(
            f"mixer expects {mix.shape[1]} tuples, got {embeddings.shape[0]}"
        )
    return T.matmul(mix, embeddings)


class MultiLevelNet(Module):
    """Shared embeddings, per-cardinality reducers, and one projection trio."""

    def __init__(self, in_dim: int, m: int, config: MultiLevelConfig, rng: np.random.Generator):
        config.validate_frames(m)
        self.config = config
        self.num_frames = m
        self.embed = Linear(in_dim, config.dim_model, rng)
        self.pe_table = (
            sinusoidal_positions(m, config.dim_model)
            if config.pe
            else np.zeros((m, config.dim_model))
        )
        self.reducers = [
            Tensor(
                rng.normal(0.0, 1.0 / np.sqrt(tuple_count(m, w)), size=(r, tuple_count(m, w))),
                requires_grad=True,
            )
            for w, r in zip(config.cardinalities, config.tuple_reps)
        ]
        self.key_proj = Linear(config.dim_model, config.dim_k, rng)
        self.query_proj = Linear(config.dim_model, config.dim_k, rng)
        self.value_proj = Linear(config.dim_model, config.dim_v, rng)
        self.key_norm = LayerNorm(config.dim_k)
        self.query_norm = LayerNorm(config.dim_k)

    def frame_embeddings(self, seq: Tensor) -> Tensor:
        """Per-frame model-space embeddings with the position code added."""
        return T.add(self.embed(seq), Tensor(self.pe_table))

    def embed_tuple(self, seq: Tensor, indices) -> Tensor:
        """Mean of the embedded member frames of one tuple."""
        idx = list(indices)
        if any(not 0 <= i < self.num_frames for i in idx):
            raise ValueError(f"tuple indices {idx} out of range")
        picked = T.take_rows(self.frame_embeddings(seq), idx)
        return picked.mean(axis=0)

    def reduced_rep(self, seq: Tensor) -> MultiLevelRep:
        """All levels embedded, reduced, and stacked ascending in w."""
        x = self.frame_embeddings(seq)
        parts = []
        for w, mix in zip(self.config.cardinalities, self.reducers):
            tuples = T.matmul(Tensor(_mean_matrix(self.num_frames, w)), x)
            parts.append(reduce_tuples(tuples, mix))
        return MultiLevelRep(rows=T.concat(parts, axis=0), blocks=self.config.blocks())

    def reduced_batch(self, seqs: Tensor) -> Tensor:
        """(V, M, D_in) stack -> (V, total_rows, D) reduced representations.

        The per-level reduction collapses to (mixer @ tuple-mean) applied to
        the frame embeddings, so the whole stack needs one batched product.
        """
        x = T.add(self.embed(seqs), Tensor(self.pe_table))
        mixers = [
            T.matmul(mix, Tensor(_mean_matrix(self.num_frames, w)))
            for w, mix in zip(self.config.cardinalities, self.reducers)
        ]
        return T.batch_matmul_left(T.concat(mixers, axis=0), x)

    def project(self, rep: MultiLevelRep) -> tuple[MultiLevelRep, MultiLevelRep, MultiLevelRep]:
        """Key, query, and value views of a reduced representation."""
        return (
            MultiLevelRep(self.key_proj(rep.rows), rep.blocks),
            MultiLevelRep(self.query_proj(rep.rows), rep.blocks),
            MultiLevelRep(self.value_proj(rep.rows), rep.blocks),
        )

    def build_multilevel(self, seq: Tensor):
        return self.project(self.reduced_rep(seq))

    def attention(self, query_rows: Tensor, support_keys: Tensor) -> Tensor:
        return attention_scores(
            query_rows, support_keys, self.query_norm, self.key_norm, self.config.dim_k
        )


def attention_scores(
    query_rows: Tensor,
    support_keys: Tensor,
    query_norm: LayerNorm,
    key_norm: LayerNorm,
    dim_k: int,
) -> Tensor:
    """Scaled dot-product attention of query rows over one class's support rows.

    Both sides are layer-normalised; each output row is a softmax over all
    support rows, so rows land on the probability simplex.
    """
    if support_keys.shape[0] == 0:
        raise ValueError("attention needs a nonempty support")
    if query_rows.shape[1] != support_keys.shape[1]:
        raise ValueError("query/support key width mismatch")
    logits = T.matmul(query_norm(query_rows), key_norm(support_keys).T)
    return T.softmax(T.scale(logits, 1.0 / np.sqrt(dim_k)), axis=-1)


def prototype(scores: Tensor, support_values: Tensor) -> Tensor:
    """Attention-weighted combination of support value rows."""
    if scores.shape[1] != support_values.shape[0]:
        raise ValueError("scores and support values disagree on row count")
    return T.matmul(scores, support_values)
