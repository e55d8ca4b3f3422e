"""Episode-conditioned temporal affine alignment.

Each video gets two candidate (zoom, pan) warps from independent
positioning networks.  A task-level network reads every video in the
episode and emits a pair of convex modulation weights that blend the two
candidates, so the blend is shared across the episode while the warp
parameters stay per-video.  The blended parameters drive a differentiable
linear resampling along the time axis, which can squeeze uninformative
border frames out of the sampled window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import Conv1dSame, Linear, Module
from .tensor import Tensor, register_op

__all__ = [
    "AffineParams",
    "Modulation",
    "PositioningNet",
    "TaskModulationNet",
    "TemporalAligner",
    "combine",
    "time_warp",
    "warp",
]


@dataclass
class AffineParams:
    """Per-video warp: zoom scales the sampling window, pan shifts it.

    Both are shape-(1,) tensors in normalized time units; (1, 0) is the
    identity warp.
    """

    zoom: Tensor
    pan: Tensor


@dataclass
class Modulation:
    """Episode-level blend weights for the two warp candidates.

    ``weights`` is a shape-(2,) tensor on the probability simplex.
    """

    weights: Tensor


class PositioningNet(Module):
    """Temporal conv stack producing one (zoom, pan) pair per video.

    The linear head starts at zero weight with bias (1, 0), so a freshly
    initialised net emits the identity warp for any input.
    """

    def __init__(
        self,
        in_dim: int,
        rng: np.random.Generator,
        channels: tuple[int, int] = (64, 32),
        identity_init: bool = True,
    ):
        c1, c2 = channels
        self.conv1 = Conv1dSame(in_dim, c1, rng)
        self.conv2 = Conv1dSame(c1, c2, rng)
        self.head = Linear(c2, 2, rng, zero_init=identity_init, bias_init=(1.0, 0.0))

    def __call__(self, feats: Tensor) -> AffineParams:
        out = self.batched(feats.reshape((1,) + feats.shape)).reshape(2)
        return AffineParams(zoom=out[0:1], pan=out[1:2])

    def batched(self, feats: Tensor) -> Tensor:
        """(V, M, D) stack of videos -> (V, 2) warp parameters."""
        x = T.relu(self.conv1(feats))
        x = T.relu(self.conv2(x))
        return self.head(x.mean(axis=1))


class TaskModulationNet(Module):
    """Produces one simplex-constrained weight pair per episode.

    Every video (support and query alike) is mean-pooled over frames,
    encoded by a shared linear+ReLU map, averaged across the episode, and
    mapped to two logits.  Averaging makes the output independent of video
    order; the zero-initialised head starts at (0.5, 0.5).
    """

    def __init__(self, in_dim: int, rng: np.random.Generator, hidden: int = 32):
        self.encoder = Linear(in_dim, hidden, rng)
        self.head = Linear(hidden, 2, rng, zero_init=True)

    def __call__(self, videos: list[Tensor]) -> Modulation:
        if not videos:
            raise ValueError("modulation needs a nonempty episode")
        stacked = T.concat([v.reshape((1,) + v.shape) for v in videos], axis=0)
        return self.batched(stacked)

    def batched(self, videos: Tensor) -> Modulation:
        """(V, M, D) stack of every video in the episode -> one weight pair."""
        encoded = T.relu(self.encoder(videos.mean(axis=1)))
        logits = self.head(encoded.mean(axis=0, keepdims=True))
        return Modulation(weights=T.softmax(logits, axis=-1).reshape(2))


def combine(p1: AffineParams, p2: AffineParams, mod: Modulation) -> AffineParams:
    """Blend two warp candidates with the episode's modulation weights."""
    w = mod.weights
    zoom = T.add(T.mul(p1.zoom, w[0:1]), T.mul(p2.zoom, w[1:2]))
    pan = T.add(T.mul(p1.pan, w[0:1]), T.mul(p2.pan, w[1:2]))
    return AffineParams(zoom=zoom, pan=pan)


def time_warp(feats: Tensor, zoom: Tensor, pan: Tensor) -> Tensor:
    """Resample an (M, D) sequence along time with an affine grid.

    M evenly spaced interval coordinates on [-1, 1] are mapped through
    ``zoom * coord + pan``, converted to fractional frame indices, and
    filled by linear interpolation between the two neighbouring source
    frames; out-of-range indices clamp to the border frame.  Differentiable
    in the features and in both warp parameters.

    The index arithmetic is arranged as ``zoom*i + (pan - zoom + 1)*h``
    (h = (M-1)/2) so the identity parameters land on integer indices with
    no rounding, reproducing the input bit-exactly.
    """
    m = feats.shape[0]
    if feats.ndim != 2 or m < 2:
        raise ValueError("time_warp expects an (M >= 2, D) matrix")
    a = float(zoom.data.reshape(()))
    b = float(pan.data.reshape(()))
    h = (m - 1) / 2.0
    i = np.arange(m, dtype=np.float64)
    idx = a * i + (b - a + 1.0) * h
    cl = np.clip(idx, 0.0, m - 1.0)
    lo = np.floor(cl).astype(np.intp)
    hi = np.minimum(lo + 1, m - 1)
    frac = (cl - lo)[:, None]
    out = (1.0 - frac) * feats.data[lo] + frac * feats.data[hi]
    on_grid = frac.reshape(-1) == 0.0
    if np.any(on_grid):
        out[on_grid] = feats.data[lo[on_grid]]
    inside = (idx >= 0.0) & (idx <= m - 1.0)

    def backward(g):
        gf = np.zeros_like(feats.data)
        np.add.at(gf, lo, (1.0 - frac) * g)
        np.add.at(gf, hi, frac * g)
        slope = ((feats.data[hi] - feats.data[lo]) * g).sum(axis=1) * inside
        ga = np.full(zoom.data.shape, (slope * (i - h)).sum())
        gb = np.full(pan.data.shape, (slope * h).sum())
        return gf, ga, gb

    return register_op(out, (feats, zoom, pan), backward)


def warp(feats: Tensor, params: AffineParams) -> Tensor:
    return time_warp(feats, params.zoom, params.pan)


class TemporalAligner(Module):
    """Full alignment stage: two positioning nets plus the task network."""

    def __init__(
        self,
        in_dim: int,
        rng: np.random.Generator,
        conv_channels: tuple[int, int] = (64, 32),
        identity_init: bool = True,
    ):
        self.positioning1 = PositioningNet(in_dim, rng, conv_channels, identity_init)
        self.positioning2 = PositioningNet(in_dim, rng, conv_channels, identity_init)
        self.task_net = TaskModulationNet(in_dim, rng)

    def modulation(self, videos: list[Tensor]) -> Modulation:
        return self.task_net(videos)

    def __call__(self, videos: list[Tensor]) -> list[Tensor]:
        """Warp every video of an episode; the modulation is shared."""
        stacked = T.concat([v.reshape((1,) + v.shape) for v in videos], axis=0)
        mod = self.task_net.batched(stacked)
        params1 = self.positioning1.batched(stacked)  # (V, 2)
        params2 = self.positioning2.batched(stacked)
        w = mod.weights
        blended = T.add(
            T.mul(params1, w[0:1]), T.mul(params2, w[1:2])
        )  # (V, 2), rows are (zoom, pan)
        out = []
        for i, feats in enumerate(videos):
            out.append(time_warp(feats, blended[i : i + 1, 0], blended[i : i + 1, 1]))
        return out
