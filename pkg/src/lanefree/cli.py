"""Command-line front end: ``lanefree {train,eval,fd-sweep,heatmap,sort-score}``.

Every command writes CSV files (UTF-8, LF) into ``--out``.  Exit status is
0 on success, 1 on a runtime failure and 2 for usage or configuration
errors (bad flags, missing or malformed config, missing or incompatible
checkpoint).
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import metrics
from .config import ConfigError, load_config
from .maddpg import CheckpointError, Maddpg, evaluate, read_trace_csv, train, write_rows

log = logging.getLogger("lanefree")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _load(path: str):
    try:
        return load_config(path)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    except ConfigError as exc:
        raise UsageError(f"invalid config: {exc}") from None


def _checkpoint(path: str, trainer=None, config_path: str | None = None) -> Maddpg:
    try:
        agents = Maddpg.load(path)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    except (CheckpointError, ValueError, KeyError) as exc:
        raise UsageError(f"unreadable checkpoint: {exc}") from None
    if trainer is not None and config_path is not None and _sets_architecture(config_path):
        try:
            agents.check_architecture(trainer)
        except CheckpointError as exc:
            raise UsageError(str(exc)) from None
    return agents


def _sets_architecture(config_path: str) -> bool:
    # only an explicit [trainer] architecture in the eval config is compared
    from .config import tomllib

    with open(config_path, "rb") as fh:
        tr = tomllib.load(fh).get("trainer", {})
    return "actor_hidden" in tr or "critic_hidden" in tr


def _out(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    scenario, trainer = _load(args.config)
    if args.seed is not None:
        trainer = replace(trainer, seed=args.seed)
    if args.episodes is not None:
        trainer = replace(trainer, episodes=args.episodes)
    out = _out(args.out)
    _, training_log = train(scenario, trainer, out_dir=out)
    training_log.write_csv(out / "training_log.csv")
    write_rows(out / "reward_curve.csv", ("episode", "avg_reward"), metrics.reward_curve(training_log))
    write_rows(out / "collision_bins.csv", ("bin_start", "bin_end", "collisions"), metrics.collision_bins(training_log))
    print(f"trained {trainer.episodes} episodes; checkpoint in {out / 'checkpoint'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    scenario, trainer = _load(args.config)
    agents = _checkpoint(args.checkpoint, trainer, args.config)
    out = _out(args.out)
    result = evaluate(
        agents, scenario, episodes=args.episodes or 1, seed=args.seed, assignment=trainer.policy_assignment
    )
    result.write_trace(out / "trace.csv")
    result.write_summary(out / "eval_summary.csv")
    print(f"{result.n_rows} trace rows, {sum(e['collisions'] for e in result.episodes)} collision steps")
    return EXIT_OK


def _counts(text: str) -> list[int]:
    try:
        counts = [int(c) for c in text.split(",") if c.strip()]
    except ValueError:
        raise UsageError(f"--counts must be comma-separated integers, got {text!r}") from None
    if not counts or min(counts) < 1:
        raise UsageError("--counts needs at least one positive vehicle count")
    return counts


def cmd_fd_sweep(args) -> int:
    scenario, _ = _load(args.config)
    counts = _counts(args.counts)
    agents = _checkpoint(args.checkpoint)
    out = _out(args.out)
    try:
        points = metrics.fd_sweep(agents, scenario, counts, seed=args.seed or 0)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    metrics.write_fd_csv(out / "fd_sweep.csv", points)
    for p in points:
        print(f"N={p.n_vehicles:4d} density={p.density:7.1f} veh/km speed={p.mean_speed:6.2f} m/s flow={p.flow:8.0f} veh/h")
    return EXIT_OK


def _trace(path: str) -> dict:
    if not Path(path).is_file():
        raise UsageError(f"trace file not found: {path}")
    try:
        return read_trace_csv(path)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"unreadable trace: {exc}") from None


def cmd_heatmap(args) -> int:
    trace = _trace(args.trace)
    if len(trace.get("step", ())) == 0:
        raise UsageError("trace is empty")
    width = args.road_width
    if width is None and args.config:
        width = _load(args.config)[0].road_width
    hm = metrics.heatmap(trace, args.mode, args.axis, width or 10.2, args.bin_size)
    out = _out(args.out)
    name = f"heatmap_{args.mode}_{args.axis}.csv"
    metrics.write_heatmap_csv(out / name, hm)
    print(f"{len(hm.values)} bins x {metrics.N_STRIPS} strips -> {out / name}")
    return EXIT_OK


def cmd_sort_score(args) -> int:
    trace = _trace(args.trace)
    rows = []
    for ep in sorted(set(int(e) for e in trace["episode"])):
        window = metrics.final_window(metrics.select_rows(trace, trace["episode"] == ep), args.window)
        try:
            score = metrics.lateral_sorting_score(window)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        rows.append({"episode": ep, "score": "" if score is None else score})
        print(f"episode {ep}: sorting score {'missing' if score is None else f'{score:.3f}'}")
    if args.out:
        write_rows(_out(args.out) / "sort_score.csv", ("episode", "score"), rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lanefree", description="Lane-free traffic MADDPG training and evaluation")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-episode progress")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train agents on the ring")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--episodes", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="noise-free evaluation, writes a per-vehicle trace")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--seed", type=int)
    e.add_argument("--episodes", type=int)
    e.set_defaults(func=cmd_eval)

    f = sub.add_parser("fd-sweep", help="flow/density points over vehicle counts on a ring")
    f.add_argument("--checkpoint", required=True)
    f.add_argument("--config", required=True)
    f.add_argument("--counts", required=True, help="comma-separated vehicle counts, e.g. 8,20,40,80")
    f.add_argument("--out", required=True)
    f.add_argument("--seed", type=int)
    f.set_defaults(func=cmd_fd_sweep)

    h = sub.add_parser("heatmap", help="mean speed per lateral strip from a trace CSV")
    h.add_argument("trace")
    h.add_argument("--mode", choices=("desired", "actual"), default="desired")
    h.add_argument("--axis", choices=("time", "space"), default="time")
    h.add_argument("--bin-size", type=float)
    h.add_argument("--road-width", type=float)
    h.add_argument("--config")
    h.add_argument("--out", required=True)
    h.add_argument("--seed", type=int, help="accepted for interface uniformity; the command is deterministic")
    h.set_defaults(func=cmd_heatmap)

    s = sub.add_parser("sort-score", help="lateral sorting score over the final window of each episode")
    s.add_argument("trace")
    s.add_argument("--window", type=float, default=0.25, help="final fraction of steps to score")
    s.add_argument("--out")
    s.add_argument("--seed", type=int, help="accepted for interface uniformity; the command is deterministic")
    s.set_defaults(func=cmd_sort_score)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure
        log.exception("command failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
