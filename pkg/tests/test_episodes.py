"""Episode sampling, synthetic generation, and TSAE round-trips."""

import numpy as np
import pytest

from tsamlt.episodes import (
    Dataset,
    EmbeddingSequence,
    SyntheticSpec,
    TsaeFormatError,
    gen_synthetic,
    load_embeddings,
    sample_episode,
    write_embeddings,
)


def small_dataset(classes=10, per_class=6, m=4, d=3, seed=0):
    rng = np.random.default_rng(seed)
    seqs = [
        EmbeddingSequence(
            frames=rng.normal(size=(m, d)), video_id=f"c{c}v{v}", class_id=c
        )
        for c in range(classes)
        for v in range(per_class)
    ]
    return Dataset(seqs)


# ---------------------------------------------------------------------------
# sampling


def test_five_way_one_shot_counts_and_disjointness():
    ds = small_dataset()
    ep = sample_episode(ds, way=5, shot=1, n_query=5, rng=np.random.default_rng(0))
    assert ep.way == 5 and ep.shot == 1
    assert sum(len(g) for g in ep.support) == 5
    assert len(ep.queries) == 5
    support_ids = {s.video_id for g in ep.support for s in g}
    query_ids = {q.video_id for q, _ in ep.queries}
    assert not support_ids & query_ids


def test_two_way_five_shot_uses_five_of_six():
    ds = small_dataset(classes=2, per_class=6)
    ep = sample_episode(ds, way=2, shot=5, n_query=2, rng=np.random.default_rng(1))
    assert all(len(g) == 5 for g in ep.support)


def test_same_seed_gives_identical_episode():
    ds = small_dataset()
    a = sample_episode(ds, 5, 1, 5, np.random.default_rng(42))
    b = sample_episode(ds, 5, 1, 5, np.random.default_rng(42))
    assert [s.video_id for g in a.support for s in g] == [
        s.video_id for g in b.support for s in g
    ]
    assert [(q.video_id, y) for q, y in a.queries] == [
        (q.video_id, y) for q, y in b.queries
    ]


def test_insufficient_classes_or_videos_rejected():
    ds = small_dataset(classes=3)
    with pytest.raises(ValueError):
        sample_episode(ds, way=5, shot=1, n_query=1, rng=np.random.default_rng(0))
    ds2 = small_dataset(classes=5, per_class=2)
    with pytest.raises(ValueError):
        sample_episode(ds2, way=5, shot=2, n_query=1, rng=np.random.default_rng(0))


def test_thousand_draws_cover_every_class():
    ds = small_dataset(classes=10)
    rng = np.random.default_rng(7)
    seen = set()
    for _ in range(1000):
        ep = sample_episode(ds, way=5, shot=1, n_query=1, rng=rng)
        seen.update(ep.class_ids)
    assert seen == set(range(10))


def test_disjointness_holds_over_many_draws():
    ds = small_dataset()
    rng = np.random.default_rng(3)
    for _ in range(200):
        ep = sample_episode(ds, way=4, shot=2, n_query=6, rng=rng)
        support_ids = {s.video_id for g in ep.support for s in g}
        assert all(q.video_id not in support_ids for q, _ in ep.queries)


# ---------------------------------------------------------------------------
# synthetic generator


def test_sigma_zero_no_pad_gives_identical_videos():
    spec = SyntheticSpec(
        classes=3, videos_per_class=4, core_len=8, pad_min=0, pad_max=0,
        noise=0.0, dim=5, frames=8,
    )
    ds = gen_synthetic(spec)
    for c, videos in ds.by_class.items():
        for v in videos[1:]:
            np.testing.assert_array_equal(v.frames, videos[0].frames)


def test_no_pad_sigma_zero_mean_classifier_is_perfect():
    spec = SyntheticSpec(
        classes=6, videos_per_class=5, core_len=6, pad_min=0, pad_max=0,
        noise=0.0, dim=16, frames=8,
    )
    ds = gen_synthetic(spec)
    centers = {
        c: np.mean([v.frames.mean(axis=0) for v in vids], axis=0)
        for c, vids in ds.by_class.items()
    }
    correct = 0
    for seq in ds.sequences:
        scores = {c: np.linalg.norm(seq.frames.mean(axis=0) - mu) for c, mu in centers.items()}
        correct += min(scores, key=scores.get) == seq.class_id
    assert correct == len(ds)


def test_fixed_seed_is_bit_deterministic():
    spec = SyntheticSpec(classes=4, videos_per_class=3, seed=9)
    a = gen_synthetic(spec)
    b = gen_synthetic(spec)
    for x, y in zip(a.sequences, b.sequences):
        assert x.video_id == y.video_id
        np.testing.assert_array_equal(x.frames, y.frames)


def test_misalignment_hurts_mean_pooling_but_not_core_oracle():
    # Two oracle classifiers on the same generated set: nearest class center
    # in mean-pooled video space vs. nearest center of the stored (aligned)
    # core content.  Padding plus resampling must cost the former accuracy.
    spec = SyntheticSpec(
        classes=10, videos_per_class=30, core_len=6, pad_min=1, pad_max=3,
        noise=0.1, dim=64, frames=8, seed=123,
    )
    ds = gen_synthetic(spec)
    cores = ds.meta["cores"]

    def accuracy(embed):
        vectors = {s.video_id: embed(s) for s in ds.sequences}
        centers = {
            c: np.mean([vectors[s.video_id] for s in vids], axis=0)
            for c, vids in ds.by_class.items()
        }
        hits = 0
        for s in ds.sequences:
            d = {c: np.linalg.norm(vectors[s.video_id] - mu) for c, mu in centers.items()}
            hits += min(d, key=d.get) == s.class_id
        return hits / len(ds)

    mean_pooled = accuracy(lambda s: s.frames.mean(axis=0))
    core_aligned = accuracy(lambda s: cores[s.video_id].mean(axis=0))
    assert core_aligned == 1.0
    assert mean_pooled < core_aligned


# ---------------------------------------------------------------------------
# TSAE container


def f32_dataset(**kw):
    ds = small_dataset(**kw)
    seqs = [
        EmbeddingSequence(
            frames=s.frames.astype(np.float32).astype(np.float64),
            video_id=s.video_id,
            class_id=s.class_id,
        )
        for s in ds.sequences
    ]
    return Dataset(seqs, class_names=ds.class_names)


def test_round_trip_is_bit_identical(tmp_path):
    ds = f32_dataset(classes=3, per_class=2, m=8, d=16)
    path = tmp_path / "features.tsae"
    write_embeddings(path, ds)
    back = load_embeddings(path)
    assert len(back) == len(ds)
    assert back.num_frames == 8 and back.dim == 16
    for a, b in zip(ds.sequences, back.sequences):
        assert a.video_id == b.video_id
        np.testing.assert_array_equal(a.frames, b.frames)


def test_two_videos_header(tmp_path):
    rng = np.random.default_rng(0)
    seqs = [
        EmbeddingSequence(
            frames=rng.normal(size=(8, 2048)).astype(np.float32),
            video_id=f"v{i}",
            class_id=i,
        )
        for i in range(2)
    ]
    path = tmp_path / "two.tsae"
    write_embeddings(path, Dataset(seqs))
    back = load_embeddings(path)
    assert len(back) == 2 and back.num_frames == 8 and back.dim == 2048


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.tsae"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(TsaeFormatError):
        load_embeddings(path)


def test_wrong_version_rejected(tmp_path):
    ds = f32_dataset(classes=2, per_class=2)
    path = tmp_path / "v.tsae"
    write_embeddings(path, ds)
    blob = bytearray(path.read_bytes())
    blob[4] = 99
    path.write_bytes(bytes(blob))
    with pytest.raises(TsaeFormatError):
        load_embeddings(path)


def test_truncated_tensor_block_rejected(tmp_path):
    ds = f32_dataset(classes=2, per_class=2)
    path = tmp_path / "t.tsae"
    write_embeddings(path, ds)
    blob = path.read_bytes()
    path.write_bytes(blob[:-7])
    with pytest.raises(TsaeFormatError):
        load_embeddings(path)


def test_manifest_names_become_dense_ids(tmp_path):
    rng = np.random.default_rng(0)
    seqs = [
        EmbeddingSequence(frames=rng.normal(size=(4, 3)), video_id=f"v{i}", class_id=c)
        for i, c in enumerate([7, 42, 7, 42])
    ]
    ds = Dataset(seqs, class_names={7: "run", 42: "jump"})
    path = tmp_path / "named.tsae"
    write_embeddings(path, ds)
    back = load_embeddings(path)
    assert sorted(back.by_class) == [0, 1]
    assert back.class_names == {0: "run", 1: "jump"}
