"""Merge and diverge on the 4 km freeway with the replicated actor."""
# %%
import sys
from pathlib import Path

import numpy as np

from lanefree.config import load_config
from lanefree.maddpg import Maddpg, evaluate
from lanefree.vehicle import RampPhase, Route

root = Path(__file__).resolve().parents[1]
checkpoint = Path(sys.argv[1]) if len(sys.argv) > 1 else root / "runs" / "smoke" / "checkpoint"
agents = Maddpg.load(checkpoint)
scenario, _ = load_config(root / "configs" / "freeway.toml")
result = evaluate(agents, scenario, seed=0)
t = result.trace
print(f"{len(np.unique(t['id']))} vehicles seen, {result.episodes[0]['exited']} left the road")

# %% One entering car: y while on the acceleration lane.
entering = np.unique(t["id"][t["route"] == Route.ENTERING])
if len(entering):
    vid = entering[0]
    sel = (t["id"] == vid) & (t["ramp_phase"] == RampPhase.ON_ACCEL_LANE)
    print(f"entering car {vid}: x {t['x'][sel][0]:.0f} -> {t['x'][sel][-1]:.0f} m, y", np.round(t["y"][sel][::4], 2))

# %% One exiting car: y from the start of the diverge phase to the deceleration lane.
exiting = np.unique(t["id"][t["route"] == Route.EXITING])
for vid in exiting[:1]:
    sel = (t["id"] == vid) & (t["ramp_phase"] >= RampPhase.PRE_DIVERGE)
    print(f"exiting car {vid}: x {t['x'][sel][0]:.0f} -> {t['x'][sel][-1]:.0f} m, y", np.round(t["y"][sel][::8], 2))
