"""Multi-agent DDPG: centralized critics, decentralized actors.

Each of the ``P`` agents owns an actor ``mu_p`` (local 8-vector observation
to a 2-vector action) and a critic ``Q_p`` that scores the joint observation
and joint action of all agents.  Target copies of both are blended towards
the main networks after every update round.

Networks see normalized quantities: observations are shifted and scaled by
fixed constants (:data:`OBS_CENTER`, :data:`OBS_SCALE`), actions are the
raw ``tanh`` outputs in [-1, 1].  Physical actions are those outputs times
``(acc_max, v_lat_max)``.  The critic input is the concatenation of all
normalized observations (agent order) followed by all normalized actions.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import neuralnet as nn
from .config import ScenarioConfig, TrainerConfig, config_hash
from .environment import ACT_DIM, OBS_DIM, LaneFreeEnv

log = logging.getLogger(__name__)

OBS_CENTER = np.array([0.0, 30.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
OBS_SCALE = np.array([0.2, 5.0, 4.0, 1.5, 4.2, 4.2, 1.0, 1.0])
CHECKPOINT_FORMAT = "lanefree-maddpg/1"


class CheckpointError(ValueError):
    """Missing, corrupt or incompatible checkpoint bundle."""


@dataclass
class Experience:
    joint_state: np.ndarray  # (P, 8)
    joint_action: np.ndarray  # (P, 2), physical units
    joint_reward: np.ndarray  # (P,)
    joint_next_state: np.ndarray  # (P, 8)
    done: bool  # absorbing terminal (collision); time-limit ends are not terminal


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    done: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring buffer of joint transitions, oldest evicted first."""

    def __init__(self, capacity: int, n_agents: int, obs_dim: int = OBS_DIM, act_dim: int = ACT_DIM):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.n_agents = n_agents
        self._s = np.zeros((capacity, n_agents, obs_dim))
        self._a = np.zeros((capacity, n_agents, act_dim))
        self._r = np.zeros((capacity, n_agents))
        self._s2 = np.zeros((capacity, n_agents, obs_dim))
        self._d = np.zeros(capacity, dtype=bool)
        self._pos = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, exp: Experience) -> None:
        if np.shape(exp.joint_state)[0] != self.n_agents:
            raise ValueError(f"experience has {np.shape(exp.joint_state)[0]} agents, buffer holds {self.n_agents}")
        k = self._pos
        self._s[k] = exp.joint_state
        self._a[k] = exp.joint_action
        self._r[k] = exp.joint_reward
        self._s2[k] = exp.joint_next_state
        self._d[k] = exp.done
        self._pos = (k + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _slot(self, i: int) -> int:
        # logical index 0 is the oldest stored transition
        start = self._pos if self._size == self.capacity else 0
        return (start + i) % self.capacity

    def __getitem__(self, i: int) -> Experience:
        if not 0 <= i < self._size:
            raise IndexError(i)
        k = self._slot(i)
        return Experience(self._s[k].copy(), self._a[k].copy(), self._r[k].copy(), self._s2[k].copy(), bool(self._d[k]))

    def sample_indices(self, k: int, rng: np.random.Generator) -> np.ndarray:
        if k > self._size:
            raise ValueError(f"cannot sample {k} transitions from a buffer of {self._size}")
        return rng.choice(self._size, size=k, replace=False)

    def sample(self, k: int, rng: np.random.Generator) -> Batch:
        """Uniform minibatch without replacement."""
        idx = np.array([self._slot(int(i)) for i in self.sample_indices(k, rng)])
        return Batch(self._s[idx], self._a[idx], self._r[idx], self._s2[idx], self._d[idx])


class OuNoise:
    """Ornstein-Uhlenbeck exploration noise, one process per agent and action dimension."""

    def __init__(self, n_agents: int, sigma: Sequence[float], theta: float = 0.15, dt: float = 0.25, mu: float = 0.0):
        self.theta = theta
        self.sigma = np.asarray(sigma, dtype=float)
        self.dt = dt
        self.mu = mu
        self.state = np.full((n_agents, len(self.sigma)), mu, dtype=float)

    def reset(self) -> None:
        self.state[:] = self.mu


def ou_sample(noise: OuNoise, rng: np.random.Generator, agent: int = 0) -> np.ndarray:
    """Advance one agent's process by ``dt`` and return its new state."""
    x = noise.state[agent]
    x += noise.theta * (noise.mu - x) * noise.dt + noise.sigma * np.sqrt(noise.dt) * rng.standard_normal(x.shape)
    return x.copy()


def normalize_obs(obs: np.ndarray) -> np.ndarray:
    return (obs - OBS_CENTER) / OBS_SCALE


class Maddpg:
    """Actors, critics and their targets for ``n_agents`` agents."""

    def __init__(
        self,
        n_agents: int,
        cfg: TrainerConfig,
        acc_max: float = 4.0,
        v_lat_max: float = 1.5,
        rng: np.random.Generator | None = None,
    ):
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.n_agents = n_agents
        self.cfg = cfg
        self.act_scale = np.array([acc_max, v_lat_max])
        critic_in = n_agents * (OBS_DIM + ACT_DIM)
        self.actor_dims = [OBS_DIM, *cfg.actor_hidden, ACT_DIM]
        self.critic_dims = [critic_in, *cfg.critic_hidden, 1]
        self.actors = [nn.init_mlp(self.actor_dims, "tanh", rng) for _ in range(n_agents)]
        self.critics = [nn.init_mlp(self.critic_dims, "linear", rng) for _ in range(n_agents)]
        self.target_actors = [a.copy() for a in self.actors]
        self.target_critics = [c.copy() for c in self.critics]
        self.updates = 0

    # -- acting ------------------------------------------------------------
    def policy(self, p: int, obs: np.ndarray) -> np.ndarray:
        """Deterministic physical action(s) of actor ``p`` for one or many observations."""
        return nn.forward(self.actors[p], normalize_obs(obs)) * self.act_scale

    def act(
        self,
        p: int,
        obs: np.ndarray,
        explore: bool = False,
        epsilon: float = 0.0,
        noise: OuNoise | None = None,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """Action of agent ``p``; with probability ``epsilon`` OU noise is added and clipped."""
        a = self.policy(p, obs)
        if explore and noise is not None and rng is not None and rng.random() < epsilon:
            a = np.clip(a + ou_sample(noise, rng, p), -self.act_scale, self.act_scale)
        return a

    # -- learning ----------------------------------------------------------
    def _critic_input(self, states: np.ndarray, norm_actions: np.ndarray) -> np.ndarray:
        k = states.shape[0]
        return np.concatenate([normalize_obs(states).reshape(k, -1), norm_actions.reshape(k, -1)], axis=1)

    def target_joint_action(self, next_states: np.ndarray) -> np.ndarray:
        """Normalized next actions from the *target* actors, shape (K, P, 2)."""
        return np.stack(
            [nn.forward(self.target_actors[q], normalize_obs(next_states[:, q])) for q in range(self.n_agents)],
            axis=1,
        )

    def td_targets(self, p: int, batch: Batch, next_actions: np.ndarray | None = None) -> np.ndarray:
        if next_actions is None:
            next_actions = self.target_joint_action(batch.next_states)
        q_next = nn.forward(self.target_critics[p], self._critic_input(batch.next_states, next_actions))[:, 0]
        return batch.rewards[:, p] + self.cfg.gamma * np.where(batch.done, 0.0, q_next)

    def critic_update(self, p: int, batch: Batch, next_actions: np.ndarray | None = None) -> float:
        """One Adam step on the mean squared TD error of critic ``p``; returns the loss."""
        y = self.td_targets(p, batch, next_actions)
        x = self._critic_input(batch.states, batch.actions / self.act_scale)
        q, cache = nn.forward_cached(self.critics[p], x)
        err = q[:, 0] - y
        k = len(y)
        grads = nn.backward(self.critics[p], x, (2.0 / k * err)[:, None], cache=cache)
        nn.adam_step(self.critics[p], grads, self.cfg.lr_critic)
        return float(np.mean(err**2))

    def actor_gradients(self, p: int, batch: Batch) -> tuple[nn.GradientBundle, float]:
        """Gradient of ``-mean Q_p`` w.r.t. actor ``p`` with its own action replaced by ``mu_p``."""
        k = batch.states.shape[0]
        s_p = normalize_obs(batch.states[:, p])
        a_p, a_cache = nn.forward_cached(self.actors[p], s_p)
        actions = batch.actions / self.act_scale
        actions = actions.copy()
        actions[:, p] = a_p
        x = self._critic_input(batch.states, actions)
        q, c_cache = nn.forward_cached(self.critics[p], x)
        dq = nn.backward(self.critics[p], x, np.full((k, 1), -1.0 / k), cache=c_cache, param_grads=False).input
        off = self.n_agents * OBS_DIM + p * ACT_DIM
        grads = nn.backward(self.actors[p], s_p, dq[:, off:off + ACT_DIM], cache=a_cache)
        return grads, float(q.mean())

    def actor_update(self, p: int, batch: Batch) -> float:
        """One Adam ascent step on mean Q; returns the pre-step mean Q."""
        grads, mean_q = self.actor_gradients(p, batch)
        nn.adam_step(self.actors[p], grads, self.cfg.lr_actor)
        return mean_q

    def update_targets(self) -> None:
        for p in range(self.n_agents):
            nn.soft_update(self.target_actors[p], self.actors[p], self.cfg.tau)
            nn.soft_update(self.target_critics[p], self.critics[p], self.cfg.tau)

    def update(self, batch: Batch) -> tuple[np.ndarray, np.ndarray]:
        """All critics, then all actors, then all targets. Returns (critic losses, mean Qs)."""
        next_actions = self.target_joint_action(batch.next_states)
        losses = np.array([self.critic_update(p, batch, next_actions) for p in range(self.n_agents)])
        qs = np.array([self.actor_update(p, batch) for p in range(self.n_agents)])
        self.update_targets()
        self.updates += 1
        return losses, qs

    # -- persistence -------------------------------------------------------
    def save(self, directory: str | Path, **manifest_extra) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for p in range(self.n_agents):
            nn.save_params(self.actors[p], d / f"agent_{p}_actor.mlp")
            nn.save_params(self.critics[p], d / f"agent_{p}_critic.mlp")
            nn.save_params(self.target_actors[p], d / f"agent_{p}_target_actor.mlp")
            nn.save_params(self.target_critics[p], d / f"agent_{p}_target_critic.mlp")
        manifest = {
            "format": CHECKPOINT_FORMAT,
            "n_agents": self.n_agents,
            "actor_dims": self.actor_dims,
            "critic_dims": self.critic_dims,
            "act_scale": self.act_scale.tolist(),
            "obs_center": OBS_CENTER.tolist(),
            "obs_scale": OBS_SCALE.tolist(),
            "updates": self.updates,
            "trainer": _trainer_dict(self.cfg),
            **manifest_extra,
        }
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory: str | Path) -> "Maddpg":
        d = Path(directory)
        mpath = d / "manifest.json"
        if not mpath.is_file():
            raise FileNotFoundError(f"no checkpoint manifest in {d}")
        manifest = json.loads(mpath.read_text())
        if manifest.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError(f"{mpath}: unknown checkpoint format {manifest.get('format')!r}")
        if manifest["obs_center"] != OBS_CENTER.tolist() or manifest["obs_scale"] != OBS_SCALE.tolist():
            raise CheckpointError("checkpoint was trained with a different observation normalization")
        tr = manifest["trainer"]
        tr["actor_hidden"] = tuple(tr["actor_hidden"])
        tr["critic_hidden"] = tuple(tr["critic_hidden"])
        cfg = TrainerConfig(**tr)
        agent = cls.__new__(cls)
        agent.n_agents = int(manifest["n_agents"])
        agent.cfg = cfg
        agent.act_scale = np.array(manifest["act_scale"], dtype=float)
        agent.actor_dims = list(manifest["actor_dims"])
        agent.critic_dims = list(manifest["critic_dims"])
        agent.updates = int(manifest["updates"])
        agent.actors, agent.critics, agent.target_actors, agent.target_critics = [], [], [], []
        for p in range(agent.n_agents):
            for name, store, dims in (
                ("actor", agent.actors, agent.actor_dims),
                ("critic", agent.critics, agent.critic_dims),
                ("target_actor", agent.target_actors, agent.actor_dims),
                ("target_critic", agent.target_critics, agent.critic_dims),
            ):
                path = d / f"agent_{p}_{name}.mlp"
                if not path.is_file():
                    raise CheckpointError(f"missing network file {path}")
                params = nn.load_params(path)
                if params.layer_dims != dims:
                    raise CheckpointError(f"{path}: layer dims {params.layer_dims} do not match manifest {dims}")
                store.append(params)
        return agent

    def check_architecture(self, cfg: TrainerConfig) -> None:
        """Raise :class:`CheckpointError` when ``cfg`` describes different network widths."""
        if tuple(self.actor_dims[1:-1]) != cfg.actor_hidden or tuple(self.critic_dims[1:-1]) != cfg.critic_hidden:
            raise CheckpointError(
                f"checkpoint networks actor={self.actor_dims} critic={self.critic_dims} do not match "
                f"configured hidden layers actor={list(cfg.actor_hidden)} critic={list(cfg.critic_hidden)}"
            )


def _trainer_dict(cfg: TrainerConfig) -> dict:
    from dataclasses import asdict

    d = asdict(cfg)
    d["actor_hidden"] = list(d["actor_hidden"])
    d["critic_hidden"] = list(d["critic_hidden"])
    return d


# --------------------------------------------------------------------------
# training and evaluation loops

TRAINING_COLUMNS = (
    "episode", "steps", "avg_reward", "total_reward", "collided", "epsilon",
    "mean_abs_speed_dev", "wrong_lateral_rate", "updates",
)


@dataclass
class TrainingLog:
    rows: list[dict] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def write_csv(self, path: str | Path) -> None:
        write_rows(path, TRAINING_COLUMNS, self.rows)


def write_rows(path: str | Path, columns: Sequence[str], rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def train(
    scenario: ScenarioConfig,
    cfg: TrainerConfig,
    out_dir: str | Path | None = None,
    callback: Callable[[dict], None] | None = None,
    learn: bool = True,
) -> tuple[Maddpg, TrainingLog]:
    """Run the centralized training loop on a fixed-size ring.

    ``learn=False`` disables gradient steps (the buffer is still filled),
    which turns the loop into a noisy rollout harness.
    """
    if scenario.kind != "ring":
        raise ValueError("training runs on the ring scenario")
    n = scenario.n_agents
    seeds = np.random.SeedSequence(cfg.seed).spawn(4)
    init_rng, explore_rng, sample_rng, env_rng = (np.random.default_rng(s) for s in seeds)
    agents = Maddpg(n, cfg, scenario.acc_max, scenario.v_lat_max, init_rng)
    env = LaneFreeEnv(scenario)
    buffer = ReplayBuffer(min(cfg.buffer_capacity, max(cfg.batch_size, cfg.episodes * scenario.max_steps)), n)
    noise = OuNoise(n, cfg.ou_sigma_frac * agents.act_scale, cfg.ou_theta, scenario.dt)
    training_log = TrainingLog()
    out = Path(out_dir) if out_dir is not None else None
    global_step = 0
    for ep in range(cfg.episodes):
        eps = cfg.epsilon(ep)
        obs = env.reset(seed=int(env_rng.integers(2**31)))
        noise.reset()
        total = 0.0
        dev = 0.0
        wrong = 0
        steps = 0
        collided = False
        while True:
            actions = np.stack([agents.act(p, obs[p], True, eps, noise, explore_rng) for p in range(n)]) if n else np.zeros((0, 2))
            res = env.step(actions)
            terminal = res.collided and scenario.terminate_on_collision
            buffer.push(Experience(obs, actions, res.rewards, res.observations, terminal))
            total += float(res.rewards.sum())
            dev += float(np.abs(res.observations[:, 0] * env.v_des).sum())
            wrong += int(res.wrong_lateral.sum())
            steps += 1
            global_step += 1
            if learn and len(buffer) >= cfg.batch_size and global_step % cfg.update_interval == 0:
                agents.update(buffer.sample(cfg.batch_size, sample_rng))
            obs = res.observations
            collided |= res.collided
            if res.done:
                break
        row = {
            "episode": ep,
            "steps": steps,
            "avg_reward": total / steps,
            "total_reward": total,
            "collided": collided,
            "epsilon": eps,
            "mean_abs_speed_dev": dev / (steps * max(n, 1)),
            "wrong_lateral_rate": wrong / (steps * max(n, 1)),
            "updates": agents.updates,
        }
        training_log.rows.append(row)
        if callback is not None:
            callback(row)
        log.info("episode %d steps %d avg_reward %.4f collided %s", ep, steps, row["avg_reward"], collided)
        if out is not None and cfg.checkpoint_every and (ep + 1) % cfg.checkpoint_every == 0:
            agents.save(out / "checkpoints" / f"episode_{ep + 1:05d}", episodes=ep + 1, config_hash=config_hash(scenario, cfg))
    if out is not None:
        agents.save(out / "checkpoint", episodes=cfg.episodes, config_hash=config_hash(scenario, cfg))
    return agents, training_log


TRACE_COLUMNS = (
    "episode", "step", "time", "id", "x", "y", "v_lon", "v_lat", "acc", "v_des", "speed_dev",
    "jerk", "lat_acc", "f_rep", "f_nud", "reward", "route", "ramp_phase", "collided",
)


@dataclass
class EvalLog:
    """Per-step, per-vehicle trace in columnar form plus one summary row per episode."""

    trace: dict[str, np.ndarray] = field(default_factory=lambda: {c: np.zeros(0) for c in TRACE_COLUMNS})
    episodes: list[dict] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return len(self.trace["step"])

    def write_trace(self, path: str | Path) -> None:
        write_trace_csv(path, self.trace)

    def write_summary(self, path: str | Path) -> None:
        write_rows(path, EVAL_SUMMARY_COLUMNS, self.episodes)


EVAL_SUMMARY_COLUMNS = ("episode", "steps", "collisions", "mean_speed", "avg_reward", "exited", "spawn_rejections")
_INT_TRACE = {"episode", "step", "id", "route", "ramp_phase", "collided"}


def write_trace_csv(path: str | Path, trace: dict[str, np.ndarray]) -> None:
    cols = [trace[c] for c in TRACE_COLUMNS]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for i in range(len(cols[0])):
            w.writerow([str(int(col[i])) if name in _INT_TRACE else repr(float(col[i])) for name, col in zip(TRACE_COLUMNS, cols)])


def read_trace_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty trace file")
        rows = list(reader)
    data = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in rows]
        data[name] = np.array(vals, dtype=int if name in _INT_TRACE else float) if vals else np.zeros(0)
    return data


def actor_assignment(ids: np.ndarray, n_agents: int, mode: str) -> np.ndarray:
    """Which trained actor drives each vehicle: actor 0 for all, or ``id mod P``."""
    if mode == "round_robin":
        return np.asarray(ids) % n_agents
    return np.zeros(len(ids), dtype=int)


def evaluate(
    agents: Maddpg,
    scenario: ScenarioConfig,
    episodes: int = 1,
    seed: int | None = None,
    assignment: str | None = None,
    record: bool = True,
) -> EvalLog:
    """Noise-free decentralized rollouts; every vehicle acts on its own observation only."""
    mode = assignment or agents.cfg.policy_assignment
    env = LaneFreeEnv(scenario)
    seed_rng = np.random.default_rng(scenario.seed if seed is None else seed)
    chunks: list[dict[str, np.ndarray]] = []
    eval_log = EvalLog()
    for ep in range(episodes):
        obs = env.reset(seed=int(seed_rng.integers(2**31)))
        collisions = 0
        total = 0.0
        speed_sum = 0.0
        samples = 0
        while True:
            ids = env.ids
            actions = np.zeros((len(ids), ACT_DIM))
            who = actor_assignment(ids, agents.n_agents, mode)
            for p in np.unique(who):
                sel = who == p
                actions[sel] = agents.policy(int(p), obs[sel])
            snap = {k: getattr(env, k).copy() for k in ("acc", "v_lat")}
            res = env.step(actions)
            collisions += int(res.collided)
            total += float(res.rewards.sum())
            speed_sum += float(res.observations[:, 1].sum())
            samples += len(res.ids)
            if record and len(res.ids):
                chunks.append(_trace_chunk(ep, res, snap, scenario.dt))
            obs = env.observation()
            if res.done:
                break
        eval_log.episodes.append({
            "episode": ep,
            "steps": env.step_count,
            "collisions": collisions,
            "mean_speed": speed_sum / samples if samples else 0.0,
            "avg_reward": total / env.step_count,
            "exited": len(env.exited),
            "spawn_rejections": env.spawn_rejections,
        })
    if chunks:
        eval_log.trace = {c: np.concatenate([ch[c] for ch in chunks]) for c in TRACE_COLUMNS}
    return eval_log


def _trace_chunk(ep: int, res, prev: dict[str, np.ndarray], dt: float) -> dict[str, np.ndarray]:
    n = len(res.ids)
    snap = res.snapshot
    obs = res.observations
    v_des = snap["v_des"]
    collided_ids = {i for pair in res.collided_pairs for i in pair}
    return {
        "episode": np.full(n, ep),
        "step": np.full(n, res.step),
        "time": np.full(n, res.step * dt),
        "id": res.ids,
        "x": snap["x"],
        "y": snap["y"],
        "v_lon": obs[:, 1],
        "v_lat": obs[:, 3],
        "acc": obs[:, 2],
        "v_des": v_des,
        "speed_dev": obs[:, 0] * v_des,
        "jerk": (obs[:, 2] - prev["acc"]) / dt,
        "lat_acc": (obs[:, 3] - prev["v_lat"]) / dt,
        "f_rep": obs[:, 6],
        "f_nud": obs[:, 7],
        "reward": res.rewards,
        "route": snap["route"],
        "ramp_phase": snap["phase"],
        "collided": np.array([int(i) in collided_ids for i in res.ids], dtype=int),
    }
