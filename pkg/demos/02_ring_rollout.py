"""Drive the 6-car ring with a hand-written controller and watch forces and rewards."""
# %%
import numpy as np

from lanefree.config import ScenarioConfig
from lanefree.environment import OBS_FIELDS, LaneFreeEnv

cfg = ScenarioConfig(n_agents=6, road_length=400.0, max_steps=400, terminate_on_collision=False)
env = LaneFreeEnv(cfg)
obs = env.reset(seed=1)
print("observation fields:", OBS_FIELDS)
print(np.round(obs, 2))


# %% A crude rule: chase the desired speed, brake under repulsion, slide left when repelled
# and right when nudged.
def controller(obs):
    s_d, v, f_rep, f_nud = obs[:, 0], obs[:, 1], obs[:, 6], obs[:, 7]
    v_des = v / (1 - s_d)
    acc = np.clip(0.8 * (v_des - v) - 6.0 * f_rep, -4, 4)
    v_lat = np.clip(3.0 * (f_rep - f_nud), -1.5, 1.5)
    v_lat[np.abs(v_lat) < 0.2] = 0.0
    return np.column_stack([acc, v_lat])


rewards, collisions = [], 0
for _ in range(cfg.max_steps):
    out = env.step(controller(obs))
    obs = out.observations
    rewards.append(out.rewards.sum())
    collisions += out.collided

# %%
print(f"mean summed reward per step {np.mean(rewards):.3f}, steps with a collision: {collisions}")
print("final |v - v_des| per car:", np.round(np.abs(env.v - env.v_des), 2))
print("final lateral positions vs desired speed:")
for k in np.argsort(env.v_des):
    print(f"  v_des {env.v_des[k]:5.1f}  y {env.y[k]:+5.2f}")
