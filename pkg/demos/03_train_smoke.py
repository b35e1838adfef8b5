"""Desk-scale MADDPG training on the 3-car, 200 m ring (a few minutes per seed)."""
# %%
import sys
from pathlib import Path

import numpy as np

from lanefree import metrics
from lanefree.config import load_config
from lanefree.maddpg import train

root = Path(__file__).resolve().parents[1]
scenario, trainer = load_config(root / "configs" / "smoke.toml")
out = Path(sys.argv[1]) if len(sys.argv) > 1 else root / "runs" / "smoke"


def progress(row):
    if row["episode"] % 10 == 0:
        print(f"episode {row['episode']:4d}  R {row['avg_reward']:7.3f}  steps {row['steps']:4d}  eps {row['epsilon']:.2f}")


agents, log = train(scenario, trainer, out_dir=out, callback=progress)

# %% Reward curve and collision counts per block of 10 episodes.
r = log.column("avg_reward")
print(f"mean R first 15: {r[:15].mean():.3f}   last 15: {r[-15:].mean():.3f}")
for b in metrics.collision_bins(log):
    print(f"episodes {b['bin_start']:3d}-{b['bin_end']:3d}: {'#' * b['collisions']}")
print("checkpoint:", out / "checkpoint", " updates:", agents.updates, " steps:", int(np.sum(log.column("steps"))))
