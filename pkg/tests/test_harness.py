"""Training loop determinism, checkpoints, evaluation, CLI plumbing."""

import numpy as np
import pytest

import tsamlt.distances
from tsamlt.episodes import Dataset, EmbeddingSequence, SyntheticSpec, gen_synthetic
from tsamlt.harness import (
    Checkpoint,
    RunConfig,
    build_model,
    evaluate,
    load_dataset,
    train,
)
from tsamlt.multilevel import MultiLevelConfig


def tiny_config(**kw):
    defaults = dict(
        way=3,
        shot=1,
        n_query=4,
        frames=6,
        dim=8,
        synthetic=SyntheticSpec(
            classes=5, videos_per_class=6, core_len=4, pad_min=0, pad_max=1,
            noise=0.1, dim=8, frames=6, seed=0,
        ),
        mlt=MultiLevelConfig(
            cardinalities=(1, 2), tuple_reps=(4, 3), dim_model=12, dim_k=6, dim_v=6
        ),
        tsa_conv_channels=(8, 8),
        ot_max_iters=25,
        train_episodes=8,
        eval_episodes=12,
        accum_window=4,
        seed=1,
    )
    defaults.update(kw)
    return RunConfig(**defaults)


def restore(config, checkpoint):
    model = build_model(config)
    model.param_store().load(checkpoint.params)
    model.load_buffers(checkpoint.buffers)
    return model


def test_zero_episodes_keeps_initialization():
    config = tiny_config(train_episodes=0)
    fresh = build_model(config)
    result = train(config)
    for name, value in result.checkpoint.params.items():
        np.testing.assert_array_equal(value, dict(fresh.named_parameters())[name].data)


def test_identical_seeds_identical_checkpoints():
    config = tiny_config()
    a = train(config)
    b = train(config)
    assert set(a.checkpoint.params) == set(b.checkpoint.params)
    for name in a.checkpoint.params:
        np.testing.assert_array_equal(a.checkpoint.params[name], b.checkpoint.params[name])
    for name in a.checkpoint.buffers:
        np.testing.assert_array_equal(a.checkpoint.buffers[name], b.checkpoint.buffers[name])
    assert a.rows == b.rows


def test_training_changes_parameters():
    config = tiny_config()
    result = train(config)
    fresh = build_model(config)
    changed = any(
        not np.array_equal(result.checkpoint.params[name], p.data)
        for name, p in fresh.named_parameters()
    )
    assert changed


def test_checkpoint_round_trip_bit_exact_eval(tmp_path):
    config = tiny_config()
    result = train(config)
    dataset = load_dataset(config)
    before = evaluate(None, config, dataset=dataset, model=restore(config, result.checkpoint))

    path = tmp_path / "ck.npz"
    result.checkpoint.save(path)
    loaded = Checkpoint.load(path)
    after = evaluate(None, config, dataset=dataset, model=restore(config, loaded))
    np.testing.assert_array_equal(before.per_episode, after.per_episode)


def test_checkpoint_rejects_incompatible_config(tmp_path):
    config = tiny_config()
    result = train(config)
    path = tmp_path / "ck.npz"
    result.checkpoint.save(path)
    other = tiny_config(way=4)
    with pytest.raises(ValueError):
        evaluate(Checkpoint.load(path), other)


def test_untrained_five_way_accuracy_is_chance():
    spec = SyntheticSpec(classes=10, videos_per_class=10, dim=16, frames=6, seed=4)
    config = RunConfig(
        way=5, shot=1, n_query=5, frames=6, dim=16, synthetic=spec,
        mlt=MultiLevelConfig(cardinalities=(1, 2), tuple_reps=(4, 3),
                             dim_model=12, dim_k=6, dim_v=6),
        tsa_conv_channels=(8, 8), ot_max_iters=25, eval_episodes=300, seed=9,
    )
    report = evaluate(None, config)
    # 300 episodes, chance 0.2: allow 4 sigma of the binomial-ish spread.
    assert abs(report.mean_accuracy - 0.2) < 4.5 * report.ci95 / 1.96


def test_degenerate_shared_template_two_way_is_coin_flip():
    rng = np.random.default_rng(0)
    template = rng.normal(size=(6, 8))
    seqs = [
        EmbeddingSequence(
            frames=template + 0.05 * rng.normal(size=(6, 8)),
            video_id=f"c{c}v{v}",
            class_id=c,
        )
        for c in range(2)
        for v in range(8)
    ]
    dataset = Dataset(seqs)
    config = tiny_config(way=2, n_query=4, eval_episodes=300, seed=2)
    report = evaluate(None, config, dataset=dataset)
    assert abs(report.mean_accuracy - 0.5) < 4.5 * report.ci95 / 1.96


def test_eval_reproducible_and_order_independent():
    config = tiny_config(eval_episodes=10)
    dataset = load_dataset(config)
    a = evaluate(None, config, dataset=dataset)
    b = evaluate(None, config, dataset=dataset)
    np.testing.assert_array_equal(a.per_episode, b.per_episode)

    # Episode i's rng comes from spawn(i), so computing one episode alone
    # reproduces its entry in the batch report.
    from tsamlt.episodes import sample_episode

    model = build_model(config)
    streams = np.random.SeedSequence(config.seed + 7_777_777).spawn(config.eval_episodes)
    for i in (7, 3, 0):
        episode = sample_episode(
            dataset, config.way, config.shot, config.n_query, np.random.default_rng(streams[i])
        )
        score = model.forward_episode(episode, training=False).accuracy
        assert score == a.per_episode[i]


def test_sequence_variant_never_touches_ot(monkeypatch):
    def boom(*args, **kwargs):
        raise AssertionError("OT path executed under sequence-only loss")

    monkeypatch.setattr(tsamlt.distances, "sinkhorn", boom)
    monkeypatch.setattr("tsamlt.model.sinkhorn", boom)
    config = tiny_config(loss_variant="sequence", tsa_enabled=False, train_episodes=4)
    result = train(config)
    assert len(result.rows) == 4


def test_fusion_variant_does_use_ot(monkeypatch):
    called = {"n": 0}
    real = tsamlt.distances.sinkhorn

    def spy(*args, **kwargs):
        called["n"] += 1
        return real(*args, **kwargs)

    monkeypatch.setattr("tsamlt.model.sinkhorn", spy)
    config = tiny_config(loss_variant="fusion", train_episodes=2)
    train(config)
    assert called["n"] == 2


def test_training_loss_decreases_on_synthetic():
    config = tiny_config(
        way=3, train_episodes=160, accum_window=8,
        loss_variant="sequence", seed=6,
        synthetic=SyntheticSpec(classes=5, videos_per_class=10, core_len=4,
                                pad_min=0, pad_max=1, noise=0.1, dim=8,
                                frames=6, seed=3),
    )
    result = train(config)
    losses = np.array([row[1] for row in result.rows])
    first = losses[:8].mean()
    last = losses[-8:].mean()
    assert last < first


def test_run_config_validation():
    with pytest.raises(ValueError):
        tiny_config(way=1)
    with pytest.raises(ValueError):
        tiny_config(accum_window=0)
    with pytest.raises(ValueError):
        tiny_config(loss_variant="nope")


# ---------------------------------------------------------------------------
# CLI


def test_cli_gen_synth_train_eval_round_trip(tmp_path, capsys):
    from tsamlt.cli import main

    data = tmp_path / "toy.tsae"
    rc = main([
        "gen-synth", "--out", str(data), "--classes", "4", "--videos-per-class", "5",
        "--frames", "6", "--dim", "8", "--seed", "0", "--core-len", "4", "--pad", "0,1",
    ])
    assert rc == 0 and data.exists() and (tmp_path / "toy.tsae.json").exists()

    ck = tmp_path / "model.npz"
    log = tmp_path / "train.csv"
    rc = main([
        "train", "--data", str(data), "--way", "3", "--shot", "1", "--queries", "4",
        "--frames", "6", "--dim", "8", "--cardinalities", "1,2", "--tuple-reps", "4,3",
        "--episodes", "4", "--seed", "1", "--out", str(ck), "--log", str(log),
        "--loss", "sequence", "--no-tsa",
    ])
    assert rc == 0 and ck.exists()
    lines = log.read_text().strip().splitlines()
    assert lines[0] == "episode,loss,accuracy"
    assert len(lines) == 5

    rc = main([
        "eval", "--data", str(data), "--way", "3", "--shot", "1", "--queries", "4",
        "--frames", "6", "--dim", "8", "--cardinalities", "1,2", "--tuple-reps", "4,3",
        "--seed", "1", "--ckpt", str(ck), "--eval-episodes", "6",
        "--loss", "sequence", "--no-tsa",
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "accuracy" in out


def test_config_file_and_flag_precedence(tmp_path):
    from tsamlt.cli import config_from_entries, read_config_file

    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text(
        """
        # comment
        way = 4
        ot.epsilon = 0.2
        mlt.cardinalities = 1,2,3
        mlt.tuple_reps = 5,4,2
        tsa.enabled = false
        loss.variant = ot
        """
    )
    entries = read_config_file(cfg_file)
    config = config_from_entries(entries)
    assert config.way == 4
    assert config.ot_epsilon == 0.2
    assert config.mlt.cardinalities == (1, 2, 3)
    assert config.tsa_enabled is False
    assert config.loss_variant == "ot"

    # flags override file values
    config2 = config_from_entries({"way": 6}, config)
    assert config2.way == 6 and config2.ot_epsilon == 0.2


def test_unknown_config_key_rejected():
    from tsamlt.cli import config_from_entries

    with pytest.raises(KeyError):
        config_from_entries({"bogus.key": 1})
