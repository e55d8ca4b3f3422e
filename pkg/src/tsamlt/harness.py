"""Episodic training and evaluation: config, loops, checkpoints, selftest.

Training draws episodes from an explicit rng, accumulates gradients over a
fixed window of episodes, averages them, and takes one plain SGD step per
window.  The learning rate is constant for the first half of the episode
budget, then drops by 10x.  Evaluation samples each episode from its own
spawned rng stream, so episode results are independent of execution order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .episodes import (
    Dataset,
    SyntheticSpec,
    gen_synthetic,
    load_embeddings,
    sample_episode,
)
from .model import LOSS_VARIANTS, EpisodeClassifier
from .multilevel import MultiLevelConfig
from .tensor import Tape

__all__ = [
    "RunConfig",
    "Checkpoint",
    "TrainResult",
    "EvalReport",
    "load_dataset",
    "build_model",
    "init_rng",
    "train",
    "evaluate",
    "selftest",
]


@dataclass(frozen=True)
class RunConfig:
    way: int = 5
    shot: int = 1
    n_query: int = 5
    frames: int = 8
    dim: int = 64
    data_path: str | None = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    tsa_enabled: bool = True
    tsa_conv_channels: tuple[int, int] = (64, 32)
    tsa_init_identity: bool = True
    mlt: MultiLevelConfig = field(default_factory=MultiLevelConfig)
    ot_epsilon: float = 0.05
    ot_max_iters: int = 100
    ot_tol: float = 1e-6
    loss_variant: str = "fusion"
    lr: float = 1e-2
    lr_late: float = 1e-3
    accum_window: int = 16
    train_episodes: int = 2000
    eval_episodes: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.way < 2:
            raise ValueError("way must be >= 2")
        if self.shot < 1 or self.n_query < 1:
            raise ValueError("shot and n_query must be >= 1")
        if self.accum_window < 1:
            raise ValueError("accumulation window must be >= 1")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ValueError(f"loss_variant must be one of {LOSS_VARIANTS}")

    def model_signature(self) -> str:
        """Hash of every field that shapes parameters or the eval path."""
        shape_fields = (
            self.way,
            self.frames,
            self.dim,
            self.tsa_enabled,
            self.tsa_conv_channels,
            self.tsa_init_identity,
            self.mlt.cardinalities,
            self.mlt.tuple_reps,
            self.mlt.dim_model,
            self.mlt.dim_k,
            self.mlt.dim_v,
            self.mlt.pe,
        )
        return hashlib.sha256(repr(shape_fields).encode()).hexdigest()[:16]


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray]
    config_hash: str
    rng_state: dict

    def save(self, path: str) -> None:
        arrays = {f"param/{k}": v for k, v in self.params.items()}
        arrays.update({f"buffer/{k}": v for k, v in self.buffers.items()})
        meta = json.dumps({"config_hash": self.config_hash, "rng_state": self.rng_state})
        np.savez_compressed(path, __meta__=np.frombuffer(meta.encode(), dtype=np.uint8), **arrays)

    @classmethod
    def load(cls, path: str) -> "Checkpoint":
        with np.load(path) as blob:
            meta = json.loads(bytes(blob["__meta__"]).decode())
            params, buffers = {}, {}
            for key in blob.files:
                if key.startswith("param/"):
                    params[key[6:]] = blob[key]
                elif key.startswith("buffer/"):
                    buffers[key[7:]] = blob[key]
        return cls(
            params=params,
            buffers=buffers,
            config_hash=meta["config_hash"],
            rng_state=meta["rng_state"],
        )


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    rows: list[tuple[int, float, float]]  # (episode, loss, accuracy)


@dataclass
class EvalReport:
    mean_accuracy: float
    ci95: float
    per_episode: np.ndarray

    def __str__(self) -> str:
        return f"accuracy {self.mean_accuracy:.4f} +/- {self.ci95:.4f} (95% CI)"


def load_dataset(config: RunConfig) -> Dataset:
    if config.data_path:
        return load_embeddings(config.data_path)
    spec = replace(config.synthetic, dim=config.dim, frames=config.frames)
    return gen_synthetic(spec)


def init_rng(config: RunConfig) -> np.random.Generator:
    """The parameter-initialisation stream for this config's seed."""
    return np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[0])


def build_model(config: RunConfig, rng: np.random.Generator | None = None) -> EpisodeClassifier:
    if rng is None:
        rng = init_rng(config)
    return EpisodeClassifier(
        in_dim=config.dim,
        frames=config.frames,
        way=config.way,
        rng=rng,
        ml_config=config.mlt,
        use_alignment=config.tsa_enabled,
        conv_channels=config.tsa_conv_channels,
        identity_init=config.tsa_init_identity,
        ot_epsilon=config.ot_epsilon,
        ot_max_iters=config.ot_max_iters,
        ot_tol=config.ot_tol,
        loss_variant=config.loss_variant,
    )


def _checkpoint_of(model: EpisodeClassifier, config: RunConfig, rng) -> Checkpoint:
    return Checkpoint(
        params=model.param_store().snapshot(),
        buffers={k: v.copy() for k, v in model.buffers().items()},
        config_hash=config.model_signature(),
        rng_state=rng.bit_generator.state,
    )


def train(
    config: RunConfig,
    dataset: Dataset | None = None,
    log=None,
) -> TrainResult:
    """Train from scratch; deterministic under (config, dataset).

    ``log`` is an optional callable receiving CSV lines (header included).
    """
    if dataset is None:
        dataset = load_dataset(config)
    episode_seq = np.random.SeedSequence(config.seed).spawn(2)[1]
    model = build_model(config)
    store = model.param_store()
    episode_rng = np.random.default_rng(episode_seq)

    if log is not None:
        log("episode,loss,accuracy")
    rows: list[tuple[int, float, float]] = []
    half = config.train_episodes // 2
    pending = 0
    for index in range(config.train_episodes):
        episode = sample_episode(
            dataset, config.way, config.shot, config.n_query, episode_rng
        )
        tape = Tape()
        with tape:
            result = model.forward_episode(episode, training=True)
            tape.backward(result.loss)
        pending += 1
        rows.append((index, result.loss.item(), result.accuracy))
        if log is not None:
            log(f"{index},{result.loss.item():.6f},{result.accuracy:.4f}")
        if pending == config.accum_window or index == config.train_episodes - 1:
            lr = config.lr if index < half else config.lr_late
            store.sgd_step(lr, grad_scale=1.0 / pending)
            store.zero_grad()
            pending = 0
    return TrainResult(
        checkpoint=_checkpoint_of(model, config, episode_rng), rows=rows
    )


def evaluate(
    checkpoint: Checkpoint | None,
    config: RunConfig,
    dataset: Dataset | None = None,
    model: EpisodeClassifier | None = None,
) -> EvalReport:
    """Mean episode accuracy with a normal-approximation 95% interval.

    Episodes are sampled from per-episode spawned rng streams, so the
    report is invariant to evaluation order.
    """
    if dataset is None:
        dataset = load_dataset(config)
    if model is None:
        model = build_model(config)
        if checkpoint is not None:
            if checkpoint.config_hash != config.model_signature():
                raise ValueError("checkpoint was built with an incompatible config")
            model.param_store().load(checkpoint.params)
            model.load_buffers(checkpoint.buffers)
    streams = np.random.SeedSequence(config.seed + 7_777_777).spawn(config.eval_episodes)
    scores = np.empty(config.eval_episodes)
    for i, seq in enumerate(streams):
        episode = sample_episode(
            dataset, config.way, config.shot, config.n_query, np.random.default_rng(seq)
        )
        scores[i] = model.forward_episode(episode, training=False).accuracy
    mean = float(scores.mean())
    ci = float(1.96 * scores.std(ddof=1) / np.sqrt(len(scores))) if len(scores) > 1 else 0.0
    return EvalReport(mean_accuracy=mean, ci95=ci, per_episode=scores)


# ---------------------------------------------------------------------------
# selftest


def selftest(verbose: bool = True) -> list[tuple[str, bool, str]]:
    """Run the invariant suite and report one pass/fail line per property."""
    from . import selfcheck

    results = selfcheck.run_all()
    if verbose:
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'}  {name}{': ' + detail if detail else ''}")
    return results
