"""Train the full model on the synthetic task and ablate its pieces.

A scaled-down run (600 episodes) that still shows the pattern: the full
model beats the no-alignment variant, and both distance signals train.
Expect a couple of minutes on a laptop CPU.
"""

import time
from dataclasses import replace

import numpy as np

from tsamlt.episodes import SyntheticSpec
from tsamlt.harness import RunConfig, build_model, evaluate, load_dataset, train

spec = SyntheticSpec(classes=10, videos_per_class=30, seed=11)
base = RunConfig(synthetic=spec, train_episodes=600, eval_episodes=150, seed=3)
dataset = load_dataset(base)

variants = {
    "full model (align + fusion)": base,
    "no alignment": replace(base, tsa_enabled=False),
    "sequence distance only": replace(base, loss_variant="sequence"),
    "OT distance only": replace(base, loss_variant="ot"),
}

print(f"5-way 1-shot on the misaligned synthetic set, "
      f"{base.train_episodes} training episodes\n")
for name, config in variants.items():
    t0 = time.time()
    result = train(config, dataset=dataset)
    model = build_model(config)
    model.param_store().load(result.checkpoint.params)
    model.load_buffers(result.checkpoint.buffers)
    report = evaluate(None, config, dataset=dataset, model=model)
    losses = [row[1] for row in result.rows]
    print(f"{name:30s} {report}   loss {np.mean(losses[:16]):.2f} -> "
          f"{np.mean(losses[-16:]):.2f}   ({time.time() - t0:.0f}s)")
