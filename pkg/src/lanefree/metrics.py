"""Evaluation metrics computed from traces: flow/density points, lateral heatmaps, sorting score.

A *trace* is a dict of equal-length column arrays with the columns of
:data:`lanefree.maddpg.TRACE_COLUMNS` (one row per vehicle and step), as
produced by :func:`lanefree.maddpg.evaluate` or read back with
:func:`lanefree.maddpg.read_trace_csv`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import spearmanr

from .config import ConfigError, ScenarioConfig
from .maddpg import Maddpg, TrainingLog, evaluate

N_STRIPS = 6
WARMUP_FRACTION = 0.25


# --------------------------------------------------------------------------
# windows


def select_rows(trace: dict[str, np.ndarray], mask: np.ndarray) -> dict[str, np.ndarray]:
    return {k: v[mask] for k, v in trace.items()}


def steady_window(trace: dict[str, np.ndarray], warmup: float = WARMUP_FRACTION) -> dict[str, np.ndarray]:
    """Rows after the first ``warmup`` fraction of steps (per episode)."""
    mask = np.zeros(len(trace["step"]), dtype=bool)
    for ep in np.unique(trace["episode"]):
        sel = trace["episode"] == ep
        last = trace["step"][sel].max()
        mask |= sel & (trace["step"] > warmup * last)
    return select_rows(trace, mask)


def final_window(trace: dict[str, np.ndarray], fraction: float = 0.25) -> dict[str, np.ndarray]:
    """Rows in the last ``fraction`` of steps (per episode)."""
    return steady_window(trace, 1.0 - fraction)


# --------------------------------------------------------------------------
# fundamental diagram


@dataclass(frozen=True)
class FdPoint:
    n_vehicles: int
    density: float  # veh/km
    flow: float  # veh/h, density x space-mean speed
    mean_speed: float  # m/s
    detector_flow: float  # veh/h, crossings of x = 0
    collisions: int


FD_COLUMNS = ("n_vehicles", "density", "flow", "mean_speed", "detector_flow", "collisions")


def fd_point(trace: dict[str, np.ndarray], n_vehicles: int, road_length: float, dt: float, collisions: int = 0) -> FdPoint:
    """Steady-state flow/density point from a ring trace (warm-up already removed)."""
    if len(trace["step"]) == 0:
        raise ValueError("empty measurement window")
    density = n_vehicles / (road_length / 1000.0)
    mean_speed = float(np.mean(trace["v_lon"]))
    crossings = 0
    for vid in np.unique(trace["id"]):
        xs = trace["x"][trace["id"] == vid]
        crossings += int(np.sum(np.diff(xs) < -road_length / 2))
    steps = np.unique(trace["step"])
    duration = len(steps) * dt
    return FdPoint(
        n_vehicles=n_vehicles,
        density=density,
        flow=3.6 * density * mean_speed,
        mean_speed=mean_speed,
        detector_flow=crossings * 3600.0 / duration,
        collisions=collisions,
    )


def fd_sweep(
    agents: Maddpg,
    ring: ScenarioConfig,
    counts: Sequence[int],
    seed: int = 0,
    warmup: float = WARMUP_FRACTION,
) -> list[FdPoint]:
    """One noise-free ring evaluation per vehicle count; collisions are counted, not fatal."""
    if ring.kind != "ring":
        raise ConfigError("fd-sweep needs a ring scenario")
    points = []
    seeds = np.random.SeedSequence(seed).generate_state(len(counts))
    for n, s in zip(counts, seeds):
        if n < 1:
            raise ConfigError(f"vehicle count must be >= 1, got {n}")
        scen = replace(ring, n_agents=int(n), terminate_on_collision=False, speed_sampling="stratified", seed=int(s))
        result = evaluate(agents, scen, episodes=1, seed=int(s), assignment="replicate")
        window = steady_window(result.trace, warmup)
        points.append(fd_point(window, int(n), ring.road_length, ring.dt, result.episodes[0]["collisions"]))
    return points


def write_fd_csv(path: str | Path, points: Sequence[FdPoint]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FD_COLUMNS)
        for p in points:
            w.writerow([p.n_vehicles, repr(p.density), repr(p.flow), repr(p.mean_speed), repr(p.detector_flow), p.collisions])


def read_fd_csv(path: str | Path) -> list[FdPoint]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [
        FdPoint(int(r["n_vehicles"]), float(r["density"]), float(r["flow"]), float(r["mean_speed"]),
                float(r["detector_flow"]), int(r["collisions"]))
        for r in rows
    ]


# --------------------------------------------------------------------------
# lateral heatmap


@dataclass
class Heatmap:
    """Mean speed per (bin, lateral strip).  Strip 0 is the rightmost; NaN marks empty cells."""

    axis: str
    mode: str
    bin_edges: np.ndarray
    strip_edges: np.ndarray
    values: np.ndarray  # (n_bins, N_STRIPS)
    counts: np.ndarray  # (n_bins, N_STRIPS)


def heatmap(
    trace: dict[str, np.ndarray],
    mode: str = "desired",
    axis: str = "time",
    road_width: float = 10.2,
    bin_size: float | None = None,
) -> Heatmap:
    """Bin rows into six equal lateral strips of the main carriageway.

    ``axis='time'`` bins by simulation time (default 10 s bins),
    ``axis='space'`` by longitudinal position (default 100 m segments).
    Rows on an auxiliary lane (outside the carriageway) are ignored.
    """
    if mode not in ("desired", "actual"):
        raise ValueError("mode must be 'desired' or 'actual'")
    if axis not in ("time", "space"):
        raise ValueError("axis must be 'time' or 'space'")
    if len(trace.get("step", ())) == 0:
        raise ValueError("empty trace")
    half = road_width / 2
    strip_edges = np.linspace(-half, half, N_STRIPS + 1)
    y = trace["y"]
    on_road = (y >= -half) & (y <= half)
    pos = trace["time"] if axis == "time" else trace["x"]
    size = bin_size if bin_size is not None else (10.0 if axis == "time" else 100.0)
    n_bins = int(np.floor(pos.max() / size)) + 1
    bin_edges = np.arange(n_bins + 1) * size
    b = np.clip(np.floor(pos / size).astype(int), 0, n_bins - 1)
    s = np.clip(np.floor((y + half) / (road_width / N_STRIPS)).astype(int), 0, N_STRIPS - 1)
    speed = trace["v_des"] if mode == "desired" else trace["v_lon"]
    sums = np.zeros((n_bins, N_STRIPS))
    counts = np.zeros((n_bins, N_STRIPS), dtype=int)
    np.add.at(sums, (b[on_road], s[on_road]), speed[on_road])
    np.add.at(counts, (b[on_road], s[on_road]), 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return Heatmap(axis, mode, bin_edges, strip_edges, values, counts)


def heatmap_columns() -> tuple[str, ...]:
    return ("bin_start", "bin_end") + tuple(f"strip_{k}" for k in range(N_STRIPS))


def write_heatmap_csv(path: str | Path, hm: Heatmap) -> None:
    """Wide layout: one row per bin, one column per strip; empty cells are blank."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(heatmap_columns())
        for i in range(len(hm.values)):
            cells = ["" if np.isnan(v) else repr(float(v)) for v in hm.values[i]]
            w.writerow([repr(float(hm.bin_edges[i])), repr(float(hm.bin_edges[i + 1]))] + cells)


def read_heatmap_csv(path: str | Path) -> np.ndarray:
    """Strip values of a heatmap CSV as an array (NaN for empty cells)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([[float(r[f"strip_{k}"]) if r[f"strip_{k}"] else np.nan for k in range(N_STRIPS)] for r in rows]).reshape(-1, N_STRIPS)


# --------------------------------------------------------------------------
# lateral sorting


def lateral_sorting_score(trace: dict[str, np.ndarray]) -> float | None:
    """Spearman correlation of desired speed and mean lateral position per vehicle.

    Positive values mean faster vehicles keep further left.  Returns ``None``
    when the desired speeds (or the positions) are all equal.
    """
    ids = np.unique(trace["id"])
    if len(ids) < 3:
        raise ValueError(f"need at least 3 vehicles in the window, got {len(ids)}")
    v_des = np.array([trace["v_des"][trace["id"] == i].mean() for i in ids])
    y_mean = np.array([trace["y"][trace["id"] == i].mean() for i in ids])
    if np.ptp(v_des) == 0 or np.ptp(y_mean) == 0:
        return None
    return float(spearmanr(v_des, y_mean).statistic)


# --------------------------------------------------------------------------
# training curves


def reward_curve(log: TrainingLog) -> list[dict]:
    return [{"episode": r["episode"], "avg_reward": r["avg_reward"]} for r in log.rows]


def collision_bins(log: TrainingLog, width: int = 10) -> list[dict]:
    """Collision count per block of ``width`` episodes."""
    out = []
    for start in range(0, len(log.rows), width):
        block = log.rows[start:start + width]
        out.append({"bin_start": start, "bin_end": start + len(block) - 1, "collisions": sum(int(r["collided"]) for r in block)})
    return out
