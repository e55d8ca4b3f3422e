"""Episode data model, synthetic misaligned sequences, and TSAE file I/O.

A dataset is an immutable collection of per-frame embedding sequences, all
sharing the same frame count M and feature width D_in.  Episodes are
sampled N-way K-shot with an explicit rng so parallel workers draw from
independent streams.

The synthetic generator plants a fixed latent template per class and hides
it behind noise, distractor padding, and temporal resampling, so the class
is recoverable from the core content but not reliably from a plain
temporal average.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EmbeddingSequence",
    "Dataset",
    "Episode",
    "SyntheticSpec",
    "TsaeFormatError",
    "sample_episode",
    "gen_synthetic",
    "load_embeddings",
    "write_embeddings",
    "resample_linear",
]

TSAE_MAGIC = b"TSAE"
TSAE_VERSION = 1


class TsaeFormatError(ValueError):
    """Malformed TSAE container."""


@dataclass(frozen=True)
class EmbeddingSequence:
    """One video as an (M, D_in) matrix of per-frame features."""

    frames: np.ndarray
    video_id: str
    class_id: int

    def __post_init__(self):
        frames = np.ascontiguousarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 2 or frames.shape[1] < 1:
            raise ValueError(f"frames must be (M>=2, D>=1), got {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ValueError(f"non-finite features in video {self.video_id!r}")
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


class Dataset:
    """Immutable set of sequences with constant M and D_in across videos."""

    def __init__(
        self,
        sequences: list[EmbeddingSequence],
        class_names: dict[int, str] | None = None,
        meta: dict | None = None,
    ):
        if not sequences:
            raise ValueError("empty dataset")
        m, d = sequences[0].num_frames, sequences[0].dim
        ids = set()
        by_class: dict[int, list[EmbeddingSequence]] = {}
        for seq in sequences:
            if seq.num_frames != m or seq.dim != d:
                raise ValueError(
                    f"inconsistent shape for {seq.video_id!r}: "
                    f"{seq.frames.shape} vs ({m}, {d})"
                )
            if seq.video_id in ids:
                raise ValueError(f"duplicate video id {seq.video_id!r}")
            ids.add(seq.video_id)
            by_class.setdefault(seq.class_id, []).append(seq)
        self.sequences = tuple(sequences)
        self.by_class = {c: tuple(v) for c, v in sorted(by_class.items())}
        self.num_frames = m
        self.dim = d
        self.class_names = dict(class_names) if class_names else {
            c: str(c) for c in self.by_class
        }
        self.meta = meta

    @property
    def class_ids(self) -> list[int]:
        return list(self.by_class)

    def __len__(self) -> int:
        return len(self.sequences)


@dataclass(frozen=True)
class Episode:
    """N-way K-shot support set plus a query set with episode-local labels.

    ``support[c]`` holds the K sequences for local class c; ``queries`` is a
    list of (sequence, local label) pairs.  ``class_ids[c]`` maps a local
    label back to the dataset class id.
    """

    support: tuple[tuple[EmbeddingSequence, ...], ...]
    queries: tuple[tuple[EmbeddingSequence, int], ...]
    class_ids: tuple[int, ...]
    way: int
    shot: int

    def __post_init__(self):
        if len(self.support) != self.way or len(self.class_ids) != self.way:
            raise ValueError("support/way mismatch")
        if any(len(group) != self.shot for group in self.support):
            raise ValueError("shot count mismatch")
        support_ids = {s.video_id for group in self.support for s in group}
        if len(support_ids) != self.way * self.shot:
            raise ValueError("duplicate support video")
        for seq, label in self.queries:
            if seq.video_id in support_ids:
                raise ValueError(f"video {seq.video_id!r} in support and query")
            if not 0 <= label < self.way:
                raise ValueError("query label out of range")

    def all_sequences(self) -> list[EmbeddingSequence]:
        out = [s for group in self.support for s in group]
        out.extend(seq for seq, _ in self.queries)
        return out


def sample_episode(
    dataset: Dataset, way: int, shot: int, n_query: int, rng: np.random.Generator
) -> Episode:
    """Draw an N-way K-shot episode without replacement.

    Queries are drawn from the pooled non-support videos of the chosen
    classes, so their per-class counts vary episode to episode.
    """
    if way < 2 or shot < 1 or n_query < 1:
        raise ValueError("need way >= 2, shot >= 1, n_query >= 1")
    class_ids = list(dataset.by_class)
    if len(class_ids) < way:
        raise ValueError(f"dataset has {len(class_ids)} classes, need {way}")
    for c in class_ids:
        if len(dataset.by_class[c]) < shot + 1:
            raise ValueError(f"class {c} has < {shot + 1} videos")

    chosen = [class_ids[i] for i in rng.choice(len(class_ids), size=way, replace=False)]
    support: list[tuple[EmbeddingSequence, ...]] = []
    query_pool: list[tuple[EmbeddingSequence, int]] = []
    for local, c in enumerate(chosen):
        videos = dataset.by_class[c]
        picks = rng.choice(len(videos), size=shot, replace=False)
        picked = set(int(i) for i in picks)
        support.append(tuple(videos[i] for i in sorted(picked)))
        query_pool.extend((videos[i], local) for i in range(len(videos)) if i not in picked)
    if len(query_pool) < n_query:
        raise ValueError(f"only {len(query_pool)} query candidates, need {n_query}")
    q_idx = rng.choice(len(query_pool), size=n_query, replace=False)
    queries = tuple(query_pool[int(i)] for i in q_idx)
    return Episode(
        support=tuple(support),
        queries=queries,
        class_ids=tuple(chosen),
        way=way,
        shot=shot,
    )


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SyntheticSpec:
    """Controls for the misaligned synthetic dataset.

    Each class owns a latent (core_len, dim) template.  A video is the
    template plus Gaussian noise, padded on both sides with distractor
    frames from a class-independent pool, then linearly resampled in time
    to exactly ``frames`` output frames.

    The pool is shared by every class (so padding carries no label
    information) but is built from amplified template frames of all
    classes, which makes the padding actively misleading for any
    classifier that averages over time.
    """

    classes: int = 10
    videos_per_class: int = 20
    core_len: int = 6
    pad_min: int = 1
    pad_max: int = 3
    noise: float = 0.1
    dim: int = 64
    frames: int = 8
    pool_size: int = 64
    distractor_scale: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2 or self.videos_per_class < 2:
            raise ValueError("need >= 2 classes and >= 2 videos per class")
        if self.core_len < 1 or self.dim < 1 or self.frames < 2:
            raise ValueError("invalid core_len/dim/frames")
        if not 0 <= self.pad_min <= self.pad_max:
            raise ValueError("need 0 <= pad_min <= pad_max")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")


def resample_linear(frames: np.ndarray, m_out: int) -> np.ndarray:
    """Resample (L, D) to (m_out, D) by linear interpolation on the index axis."""
    length = frames.shape[0]
    if length == m_out:
        return frames.copy()
    src = np.linspace(0.0, length - 1, m_out)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, length - 1)
    w = (src - lo)[:, None]
    return (1.0 - w) * frames[lo] + w * frames[hi]


def gen_synthetic(spec: SyntheticSpec, rng: np.random.Generator | None = None) -> Dataset:
    """Generate a synthetic dataset; bit-deterministic under a fixed rng.

    The returned dataset carries ``meta`` with the class templates and each
    video's pre-padding core, which oracle classifiers in the tests use.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    templates = rng.normal(size=(spec.classes, spec.core_len, spec.dim))
    flat = templates.reshape(-1, spec.dim)
    pool = spec.distractor_scale * flat[rng.integers(0, flat.shape[0], size=spec.pool_size)]
    sequences = []
    cores: dict[str, np.ndarray] = {}
    for c in range(spec.classes):
        for v in range(spec.videos_per_class):
            core = templates[c] + spec.noise * rng.normal(size=(spec.core_len, spec.dim))
            left = int(rng.integers(spec.pad_min, spec.pad_max + 1))
            right = int(rng.integers(spec.pad_min, spec.pad_max + 1))
            parts = [core]
            if left:
                parts.insert(0, pool[rng.integers(0, spec.pool_size, size=left)])
            if right:
                parts.append(pool[rng.integers(0, spec.pool_size, size=right)])
            padded = np.concatenate(parts, axis=0)
            frames = resample_linear(padded, spec.frames)
            vid = f"synth-c{c:03d}-v{v:03d}"
            cores[vid] = core
            sequences.append(EmbeddingSequence(frames=frames, video_id=vid, class_id=c))
    meta = {"templates": templates, "cores": cores}
    names = {c: f"class-{c:03d}" for c in range(spec.classes)}
    return Dataset(sequences, class_names=names, meta=meta)


# ---------------------------------------------------------------------------
# TSAE container: magic "TSAE", u32 version, u32 count, u32 M, u32 D_in,
# then per video: u32 class_id, u32 id length, UTF-8 id, M*D_in f32 (LE).
# A sidecar JSON manifest maps class_id -> class name.


def _manifest_path(path: str) -> str:
    return str(path) + ".json"


def write_embeddings(path: str, dataset: Dataset) -> None:
    """Write a dataset as a TSAE file plus its sidecar manifest.

    Features are stored as little-endian f32, the container's precision.
    """
    with open(path, "wb") as fh:
        fh.write(TSAE_MAGIC)
        fh.write(
            struct.pack(
                "<IIII",
                TSAE_VERSION,
                len(dataset.sequences),
                dataset.num_frames,
                dataset.dim,
            )
        )
        for seq in dataset.sequences:
            ident = seq.video_id.encode("utf-8")
            fh.write(struct.pack("<II", seq.class_id, len(ident)))
            fh.write(ident)
            fh.write(seq.frames.astype("<f4").tobytes())
    with open(_manifest_path(path), "w", encoding="utf-8") as fh:
        json.dump({str(c): n for c, n in dataset.class_names.items()}, fh, indent=2)


def load_embeddings(path: str) -> Dataset:
    """Load a TSAE file; class ids are remapped to dense 0..C-1 integers."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != TSAE_MAGIC:
        raise TsaeFormatError(f"bad magic {blob[:4]!r}")
    if len(blob) < 20:
        raise TsaeFormatError("truncated header")
    version, count, m, d = struct.unpack_from("<IIII", blob, 4)
    if version != TSAE_VERSION:
        raise TsaeFormatError(f"unsupported version {version}")
    if m < 2 or d < 1:
        raise TsaeFormatError(f"invalid dimensions M={m}, D_in={d}")
    offset = 20
    raw: list[tuple[int, str, np.ndarray]] = []
    block = 4 * m * d
    for _ in range(count):
        if offset + 8 > len(blob):
            raise TsaeFormatError("truncated video header")
        class_id, id_len = struct.unpack_from("<II", blob, offset)
        offset += 8
        if offset + id_len + block > len(blob):
            raise TsaeFormatError("truncated tensor block")
        video_id = blob[offset : offset + id_len].decode("utf-8")
        offset += id_len
        frames = np.frombuffer(blob, dtype="<f4", count=m * d, offset=offset)
        offset += block
        raw.append((class_id, video_id, frames.reshape(m, d).astype(np.float64)))
    if offset != len(blob):
        raise TsaeFormatError(f"{len(blob) - offset} trailing bytes")

    names: dict[int, str] = {}
    try:
        with open(_manifest_path(path), "r", encoding="utf-8") as fh:
            names = {int(k): str(v) for k, v in json.load(fh).items()}
    except FileNotFoundError:
        pass

    dense = {c: i for i, c in enumerate(sorted({c for c, _, _ in raw}))}
    sequences = [
        EmbeddingSequence(frames=frames, video_id=vid, class_id=dense[c])
        for c, vid, frames in raw
    ]
    class_names = {dense[c]: names.get(c, str(c)) for c in dense}
    return Dataset(sequences, class_names=class_names)
