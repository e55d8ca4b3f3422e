"""End-to-end episodic pipeline: align, build multi-level reps, classify.

One forward pass processes a whole episode: every sequence is (optionally)
time-warped with episode-conditioned affine parameters, turned into a
multi-level tuple representation, and each query builds a query-specific
prototype per class by cross-attention over that class's support rows.
Per-class OT and sequence distances are fused into class scores, and the
episode loss is the cross-entropy over queries.

Per-(query, class) transport problems share one batched Sinkhorn call, so
an episode stays a few hundred tape records instead of tens of thousands.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .alignment import TemporalAligner
from .distances import FusionNet, classify_and_loss, fuse, seq_distance, sinkhorn
from .episodes import Episode
from .multilevel import MultiLevelConfig, MultiLevelNet, prototype
from .nn import Module, ParamStore
from .tensor import Tensor

__all__ = ["DistanceBundle", "EpisodeResult", "EpisodeClassifier", "LOSS_VARIANTS"]

LOSS_VARIANTS = ("fusion", "sequence", "ot")


@dataclass
class DistanceBundle:
    """Per-query distance vectors over the episode's classes.

    ``combined`` is always ordered [ot || seq].  Entries are None when the
    active loss variant never computed them.
    """

    ot: np.ndarray | None
    seq: np.ndarray | None
    combined: np.ndarray | None
    fused: np.ndarray | None


@dataclass
class EpisodeResult:
    loss: Tensor
    logits: np.ndarray
    probs: np.ndarray
    labels: np.ndarray
    accuracy: float
    bundles: list[DistanceBundle]


class EpisodeClassifier(Module):
    """The trainable model for N-way K-shot sequence classification."""

    def __init__(
        self,
        in_dim: int,
        frames: int,
        way: int,
        rng: np.random.Generator,
        ml_config: MultiLevelConfig | None = None,
        use_alignment: bool = True,
        conv_channels: tuple[int, int] = (64, 32),
        identity_init: bool = True,
        ot_epsilon: float = 0.05,
        ot_max_iters: int = 100,
        ot_tol: float = 1e-6,
        loss_variant: str = "fusion",
    ):
        if loss_variant not in LOSS_VARIANTS:
            raise ValueError(f"loss_variant must be one of {LOSS_VARIANTS}")
        self.in_dim = in_dim
        self.frames = frames
        self.way = way
        self.ot_epsilon = ot_epsilon
        self.ot_max_iters = ot_max_iters
        self.ot_tol = ot_tol
        self.loss_variant = loss_variant
        self.aligner = (
            TemporalAligner(in_dim, rng, conv_channels, identity_init)
            if use_alignment
            else None
        )
        self.multilevel = MultiLevelNet(in_dim, frames, ml_config or MultiLevelConfig(), rng)
        self.fusion = FusionNet(way, rng)

    # -- parameter plumbing ------------------------------------------------

    def param_store(self) -> ParamStore:
        return ParamStore(dict(self.named_parameters()))

    def buffers(self) -> dict[str, np.ndarray]:
        return dict(self.named_buffers())

    def load_buffers(self, values: dict[str, np.ndarray]) -> None:
        own = dict(self.named_buffers())
        if set(values) != set(own):
            raise KeyError("buffer name mismatch")
        for key, arr in values.items():
            own[key][...] = arr

    # -- episode forward -----------------------------------------------------

    def forward_episode(self, episode: Episode, training: bool = False) -> EpisodeResult:
        if episode.way != self.way:
            raise ValueError(f"model is {self.way}-way, episode is {episode.way}-way")
        if episode.queries[0][0].num_frames != self.frames:
            raise ValueError("episode frame count differs from model")

        way, shot = episode.way, episode.shot
        n_query = len(episode.queries)
        labels = np.array([label for _, label in episode.queries], dtype=int)

        videos = [Tensor(s.frames) for group in episode.support for s in group]
        videos += [Tensor(seq.frames) for seq, _ in episode.queries]
        if self.aligner is not None:
            videos = self.aligner(videos)

        rows = self.multilevel.config.total_rows
        dim_k = self.multilevel.config.dim_k
        dim_v = self.multilevel.config.dim_v
        stacked = T.concat([v.reshape((1,) + v.shape) for v in videos], axis=0)
        reduced = self.multilevel.reduced_batch(stacked)  # (V, rows, D)
        n_support = way * shot

        support_red = reduced[:n_support]
        keys_3d = self.multilevel.key_proj(support_red)
        supp_vals_3d = self.multilevel.value_proj(support_red)
        class_keys = [
            keys_3d[c * shot : (c + 1) * shot].reshape(shot * rows, dim_k)
            for c in range(way)
        ]
        class_values = [
            supp_vals_3d[c * shot : (c + 1) * shot].reshape(shot * rows, dim_v)
            for c in range(way)
        ]

        query_red = reduced[n_support:]
        stacked_rows = self.multilevel.query_proj(query_red).reshape(
            n_query * rows, dim_k
        )
        vals_3d = self.multilevel.value_proj(query_red)  # (Q, rows, d_v)

        need_ot = self.loss_variant in ("fusion", "ot")
        need_seq = self.loss_variant in ("fusion", "sequence")

        seq_cols, cost_blocks = [], []
        for c in range(way):
            scores = self.multilevel.attention(stacked_rows, class_keys[c])
            protos = prototype(scores, class_values[c]).reshape(n_query, rows, dim_v)
            if need_seq:
                diff = T.sub(vals_3d, protos)
                per_query = T.tsum(T.mul(diff, diff), axis=(-2, -1)) / rows
                seq_cols.append(per_query.reshape(n_query, 1))
            if need_ot:
                cost_blocks.append(
                    T.pairwise_dist(vals_3d, protos).reshape(1, n_query, rows, rows)
                )

        seq_mat = T.concat(seq_cols, axis=1) if need_seq else None  # (Q, N)
        ot_mat = None
        if need_ot:
            costs = T.concat(cost_blocks, axis=0)  # (N, Q, rows, rows)
            _, ot_by_class = sinkhorn(
                costs, self.ot_epsilon, self.ot_max_iters, self.ot_tol
            )
            ot_mat = ot_by_class.T  # (Q, N)

        fused = None
        if self.loss_variant == "fusion":
            fused = fuse(ot_mat, seq_mat, self.fusion, training)
            logits = fused
        elif self.loss_variant == "sequence":
            # Metric semantics: closer prototype means more likely class.
            logits = T.scale(seq_mat, -1.0)
        else:
            logits = T.scale(ot_mat, -1.0)

        probs, loss = classify_and_loss(logits, labels)
        predicted = probs.data.argmax(axis=1)
        accuracy = float((predicted == labels).mean())

        bundles = [
            DistanceBundle(
                ot=None if ot_mat is None else ot_mat.data[q].copy(),
                seq=None if seq_mat is None else seq_mat.data[q].copy(),
                combined=(
                    None
                    if ot_mat is None or seq_mat is None
                    else np.concatenate([ot_mat.data[q], seq_mat.data[q]])
                ),
                fused=None if fused is None else fused.data[q].copy(),
            )
            for q in range(n_query)
        ]
        return EpisodeResult(
            loss=loss,
            logits=logits.data.copy(),
            probs=probs.data.copy(),
            labels=labels,
            accuracy=accuracy,
            bundles=bundles,
        )
