"""Evaluate a trained actor on a 12-car ring: speed tracking, lateral sorting, heatmap."""
# %%
import sys
from pathlib import Path

import numpy as np

from lanefree import metrics
from lanefree.config import load_config
from lanefree.maddpg import Maddpg, evaluate

root = Path(__file__).resolve().parents[1]
checkpoint = Path(sys.argv[1]) if len(sys.argv) > 1 else root / "runs" / "smoke" / "checkpoint"
agents = Maddpg.load(checkpoint)
scenario, _ = load_config(root / "configs" / "ring12.toml")
result = evaluate(agents, scenario, seed=0)
trace = result.trace

# %% How close does each car get to its desired speed once the start-up is over?
late = metrics.steady_window(trace)
dev = np.abs(late["v_lon"] - late["v_des"])
print(f"within 1 m/s of desired speed: {np.mean(dev < 1.0):.0%}; collision steps: {result.episodes[0]['collisions']}")

# %% Faster cars should drift left (positive y).
final = metrics.final_window(trace)
print("sorting score over the final quarter:", metrics.lateral_sorting_score(final))

hm = metrics.heatmap(trace, "desired", "time", scenario.road_width, bin_size=50.0)
print("mean desired speed per strip (right -> left), one row per 50 s:")
print(np.round(hm.values, 1))
