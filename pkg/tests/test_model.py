"""Episode-level model behaviour: shapes, bundles, equivalences, gradients."""

import numpy as np
import pytest
from _oracles import fd_grad, rel_err

import tsamlt.tensor as T
from tsamlt.episodes import SyntheticSpec, gen_synthetic, sample_episode
from tsamlt.model import EpisodeClassifier
from tsamlt.multilevel import MultiLevelConfig
from tsamlt.tensor import Tape, Tensor


def tiny_setup(seed=0, variant="fusion", way=3, use_alignment=True):
    spec = SyntheticSpec(
        classes=5, videos_per_class=6, core_len=4, pad_min=0, pad_max=1,
        noise=0.1, dim=8, frames=6, seed=seed,
    )
    ds = gen_synthetic(spec)
    cfg = MultiLevelConfig(cardinalities=(1, 2), tuple_reps=(4, 3),
                           dim_model=12, dim_k=6, dim_v=6)
    model = EpisodeClassifier(
        in_dim=8, frames=6, way=way, rng=np.random.default_rng(seed),
        ml_config=cfg, conv_channels=(8, 8), ot_max_iters=25,
        loss_variant=variant, use_alignment=use_alignment,
    )
    episode = sample_episode(ds, way, 1, 4, np.random.default_rng(seed + 1))
    return model, episode


def test_result_shapes_and_bundles_fusion():
    model, episode = tiny_setup()
    res = model.forward_episode(episode, training=True)
    assert res.logits.shape == (4, 3)
    assert res.probs.shape == (4, 3)
    np.testing.assert_allclose(res.probs.sum(axis=1), np.ones(4), atol=1e-9)
    for b in res.bundles:
        assert b.ot.shape == (3,) and b.seq.shape == (3,) and b.fused.shape == (3,)
        np.testing.assert_array_equal(b.combined, np.concatenate([b.ot, b.seq]))


def test_bundles_for_sequence_variant_skip_ot():
    model, episode = tiny_setup(variant="sequence")
    res = model.forward_episode(episode)
    for b in res.bundles:
        assert b.ot is None and b.combined is None and b.fused is None
        assert b.seq.shape == (3,)
    np.testing.assert_allclose(res.logits, -np.stack([b.seq for b in res.bundles]))


def test_bundles_for_ot_variant_skip_seq():
    model, episode = tiny_setup(variant="ot")
    res = model.forward_episode(episode)
    for b in res.bundles:
        assert b.seq is None and b.ot.shape == (3,)
    np.testing.assert_allclose(res.logits, -np.stack([b.ot for b in res.bundles]))


def test_forward_deterministic():
    model, episode = tiny_setup()
    a = model.forward_episode(episode)
    b = model.forward_episode(episode)
    np.testing.assert_array_equal(a.logits, b.logits)
    assert a.loss.item() == b.loss.item()


def test_way_mismatch_rejected():
    model, _ = tiny_setup(way=3)
    _, episode4 = tiny_setup(way=4)
    with pytest.raises(ValueError):
        model.forward_episode(episode4)


def test_batched_reduction_matches_per_video_path():
    model, episode = tiny_setup()
    videos = [Tensor(s.frames) for g in episode.support for s in g]
    stacked = T.concat([v.reshape((1,) + v.shape) for v in videos], axis=0)
    batch = model.multilevel.reduced_batch(stacked)
    for i, video in enumerate(videos):
        single = model.multilevel.reduced_rep(video)
        np.testing.assert_allclose(batch.data[i], single.rows.data, atol=1e-10)


def test_alignment_batched_matches_single():
    model, episode = tiny_setup()
    aligner = model.aligner
    rng = np.random.default_rng(5)
    aligner.positioning1.head.weight.data = 0.05 * rng.normal(size=(8, 2))
    videos = [Tensor(s.frames) for g in episode.support for s in g]
    stacked = T.concat([v.reshape((1,) + v.shape) for v in videos], axis=0)
    batch = aligner.positioning1.batched(stacked)
    for i, video in enumerate(videos):
        single = aligner.positioning1(video)
        np.testing.assert_allclose(batch.data[i, 0], single.zoom.data[0], atol=1e-12)
        np.testing.assert_allclose(batch.data[i, 1], single.pan.data[0], atol=1e-12)


@pytest.mark.parametrize("variant", ["fusion", "sequence", "ot"])
@pytest.mark.parametrize("use_alignment", [True, False])
def test_end_to_end_gradient_matches_directional_fd(variant, use_alignment):
    model, episode = tiny_setup(variant=variant, use_alignment=use_alignment)
    params = model.param_store().tensors()
    rng = np.random.default_rng(99)

    # Nudge heads off the identity so the warp sits at a generic point.
    if use_alignment:
        model.aligner.positioning1.head.weight.data += 0.05 * rng.normal(size=(8, 2))
        model.aligner.positioning2.head.weight.data += 0.05 * rng.normal(size=(8, 2))

    with Tape() as tape:
        res = model.forward_episode(episode, training=False)
        tape.backward(res.loss)
    direction = [rng.normal(size=p.shape) for p in params]
    analytic = sum(
        float((p.grad * d).sum()) for p, d in zip(params, direction) if p.grad is not None
    )

    h = 1e-5
    originals = [p.data.copy() for p in params]

    def loss_at(sign):
        for p, base, d in zip(params, originals, direction):
            p.data = base + sign * h * d
        value = model.forward_episode(episode, training=False).loss.item()
        for p, base in zip(params, originals):
            p.data = base
        return value

    fd = (loss_at(+1) - loss_at(-1)) / (2 * h)
    assert rel_err(np.array([analytic]), np.array([fd])) < 1e-3
