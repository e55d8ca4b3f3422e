"""Command-line interface: train, eval, selftest, gen-synth.

Configuration precedence: built-in defaults, then `--config` file entries
(key=value lines, dotted keys like `ot.epsilon`), then explicit flags.
Training metrics stream as CSV to stdout or `--log`.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .episodes import SyntheticSpec, gen_synthetic, write_embeddings
from .harness import Checkpoint, RunConfig, evaluate, load_dataset, selftest, train
from .multilevel import MultiLevelConfig


def _parse_value(raw: str):
    text = raw.strip()
    low = text.lower()
    if low in ("true", "on", "yes"):
        return True
    if low in ("false", "off", "no"):
        return False
    if "," in text:
        return tuple(_parse_value(part) for part in text.split(","))
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_config_file(path: str) -> dict:
    """Parse `key = value` lines; '#' starts a comment."""
    entries: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, raw = body.split("=", 1)
            entries[key.strip()] = _parse_value(raw)
    return entries


_KEY_MAP = {
    "way": "way",
    "shot": "shot",
    "queries": "n_query",
    "frames": "frames",
    "dim": "dim",
    "seed": "seed",
    "episodes": "train_episodes",
    "eval_episodes": "eval_episodes",
    "accum_window": "accum_window",
    "lr": "lr",
    "lr_late": "lr_late",
    "data": "data_path",
    "tsa.enabled": "tsa_enabled",
    "tsa.conv_channels": "tsa_conv_channels",
    "tsa.init_identity": "tsa_init_identity",
    "ot.epsilon": "ot_epsilon",
    "ot.max_iters": "ot_max_iters",
    "ot.tol": "ot_tol",
    "loss.variant": "loss_variant",
}

_MLT_KEYS = {
    "mlt.cardinalities": "cardinalities",
    "mlt.tuple_reps": "tuple_reps",
    "mlt.dim_model": "dim_model",
    "mlt.dim_k": "dim_k",
    "mlt.dim_v": "dim_v",
    "mlt.pe": "pe",
}


def config_from_entries(entries: dict, base: RunConfig | None = None) -> RunConfig:
    config = base or RunConfig()
    plain: dict = {}
    mlt_kw: dict = {}
    for key, value in entries.items():
        if key in _KEY_MAP:
            if key in ("tsa.conv_channels",) and isinstance(value, (int, float)):
                value = (int(value),)
            plain[_KEY_MAP[key]] = value
        elif key in _MLT_KEYS:
            if _MLT_KEYS[key] in ("cardinalities", "tuple_reps") and isinstance(value, int):
                value = (value,)
            mlt_kw[_MLT_KEYS[key]] = value
        else:
            raise KeyError(f"unknown config key {key!r}")
    if mlt_kw:
        current = config.mlt
        merged = MultiLevelConfig(
            cardinalities=tuple(mlt_kw.get("cardinalities", current.cardinalities)),
            tuple_reps=tuple(mlt_kw.get("tuple_reps", current.tuple_reps)),
            dim_model=mlt_kw.get("dim_model", current.dim_model),
            dim_k=mlt_kw.get("dim_k", current.dim_k),
            dim_v=mlt_kw.get("dim_v", current.dim_v),
            pe=bool(mlt_kw.get("pe", current.pe)),
        )
        plain["mlt"] = merged
    return replace(config, **plain)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(","))


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--way", type=int)
    parser.add_argument("--shot", type=int)
    parser.add_argument("--queries", type=int, help="queries per episode")
    parser.add_argument("--frames", type=int)
    parser.add_argument("--dim", type=int)
    parser.add_argument("--cardinalities", type=_int_list, metavar="1,2,3,4")
    parser.add_argument("--tuple-reps", type=_int_list, metavar="8,4,3,2")
    parser.add_argument("--loss", choices=("fusion", "sequence", "ot"))
    parser.add_argument("--no-tsa", action="store_true", help="disable alignment")
    parser.add_argument("--epsilon", type=float, help="OT regularization")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--episodes", type=int)
    parser.add_argument("--data", help="TSAE feature file (default: synthetic)")


def _config_from_args(args) -> RunConfig:
    config = RunConfig()
    if args.config:
        config = config_from_entries(read_config_file(args.config), config)
    overrides: dict = {}
    for attr, key in (
        ("way", "way"),
        ("shot", "shot"),
        ("queries", "queries"),
        ("frames", "frames"),
        ("dim", "dim"),
        ("loss", "loss.variant"),
        ("epsilon", "ot.epsilon"),
        ("seed", "seed"),
        ("episodes", "episodes"),
        ("data", "data"),
        ("cardinalities", "mlt.cardinalities"),
        ("tuple_reps", "mlt.tuple_reps"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "no_tsa", False):
        overrides["tsa.enabled"] = False
    return config_from_entries(overrides, config)


def _open_log(args):
    if getattr(args, "log", None):
        handle = open(args.log, "w", encoding="utf-8")
        return (lambda line: print(line, file=handle)), handle
    return (lambda line: print(line)), None


def cmd_train(args) -> int:
    config = _config_from_args(args)
    log, handle = _open_log(args)
    try:
        result = train(config, log=log)
    finally:
        if handle:
            handle.close()
    if args.out:
        result.checkpoint.save(args.out)
        print(f"checkpoint written to {args.out}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    config = _config_from_args(args)
    if args.eval_episodes is not None:
        config = replace(config, eval_episodes=args.eval_episodes)
    checkpoint = Checkpoint.load(args.ckpt) if args.ckpt else None
    report = evaluate(checkpoint, config)
    print(report)
    return 0


def cmd_selftest(_args) -> int:
    results = selftest(verbose=True)
    return 0 if all(ok for _, ok, _ in results) else 1


def cmd_gen_synth(args) -> int:
    spec = SyntheticSpec(
        classes=args.classes,
        videos_per_class=args.videos_per_class,
        core_len=args.core_len,
        pad_min=args.pad[0],
        pad_max=args.pad[1],
        noise=args.noise,
        dim=args.dim if args.dim is not None else 64,
        frames=args.frames if args.frames is not None else 8,
        seed=args.seed if args.seed is not None else 0,
    )
    dataset = gen_synthetic(spec)
    write_embeddings(args.out, dataset)
    print(
        f"wrote {len(dataset)} sequences "
        f"({spec.classes} classes, M={spec.frames}, D={spec.dim}) to {args.out}",
        file=sys.stderr,
    )
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tsamlt",
        description="Episodic few-shot sequence classification engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model")
    _add_common(p_train)
    p_train.add_argument("--out", help="checkpoint output path (.npz)")
    p_train.add_argument("--log", help="write CSV metrics here instead of stdout")
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(p_eval)
    p_eval.add_argument("--ckpt", help="checkpoint file from `train --out`")
    p_eval.add_argument("--eval-episodes", type=int, dest="eval_episodes")
    p_eval.set_defaults(fn=cmd_eval)

    p_self = sub.add_parser("selftest", help="run the invariant suite")
    p_self.set_defaults(fn=cmd_selftest)

    p_gen = sub.add_parser("gen-synth", help="write a synthetic TSAE dataset")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--classes", type=int, default=10)
    p_gen.add_argument("--videos-per-class", type=int, default=20)
    p_gen.add_argument("--core-len", type=int, default=6)
    p_gen.add_argument("--pad", type=_int_list, default=(1, 3), metavar="MIN,MAX")
    p_gen.add_argument("--noise", type=float, default=0.1)
    p_gen.add_argument("--frames", type=int)
    p_gen.add_argument("--dim", type=int)
    p_gen.add_argument("--seed", type=int)
    p_gen.set_defaults(fn=cmd_gen_synth)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
