import numpy as np
import pytest

from lanefree.cli import main
from lanefree.maddpg import TRACE_COLUMNS, read_trace_csv

TINY = """
[scenario]
n_agents = 3
road_length = 200.0
max_steps = 20

[trainer]
episodes = 2
batch_size = 8
actor_hidden = [8]
critic_hidden = [8]
checkpoint_every = 0
"""


@pytest.fixture
def tiny_config(tmp_path):
    p = tmp_path / "tiny.toml"
    p.write_text(TINY)
    return p


@pytest.fixture
def trained(tmp_path, tiny_config):
    out = tmp_path / "train"
    assert main(["train", "--config", str(tiny_config), "--out", str(out)]) == 0
    return out


def test_train_outputs(trained):
    for name in ("training_log.csv", "reward_curve.csv", "collision_bins.csv", "checkpoint/manifest.json"):
        assert (trained / name).is_file()
    lines = (trained / "reward_curve.csv").read_text().splitlines()
    assert lines[0] == "episode,avg_reward" and len(lines) == 3


def test_train_zero_episodes(tmp_path, tiny_config):
    out = tmp_path / "zero"
    assert main(["train", "--config", str(tiny_config), "--out", str(out), "--episodes", "0"]) == 0
    assert (out / "reward_curve.csv").read_text() == "episode,avg_reward\n"


def test_missing_config_exit_2(tmp_path):
    assert main(["train", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path / "o")]) == 2


def test_bad_config_exit_2(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[scenario]\nkind = 'maze'\n")
    assert main(["train", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_usage_error_exit_2():
    assert main(["train"]) == 2
    assert main(["fly"]) == 2


def test_eval_trace_rows(tmp_path, tiny_config, trained):
    out = tmp_path / "eval"
    cfg = tmp_path / "eval.toml"
    cfg.write_text("[scenario]\nn_agents = 6\nmax_steps = 15\nterminate_on_collision = false\n")
    assert main(["eval", "--checkpoint", str(trained / "checkpoint"), "--config", str(cfg), "--out", str(out)]) == 0
    trace = read_trace_csv(out / "trace.csv")
    assert len(trace["step"]) == 15 * 6
    header = (out / "trace.csv").read_text().splitlines()[0].split(",")
    assert tuple(header) == TRACE_COLUMNS


def test_eval_missing_checkpoint_exit_2(tmp_path, tiny_config):
    assert main(["eval", "--checkpoint", str(tmp_path / "none"), "--config", str(tiny_config), "--out", str(tmp_path / "e")]) == 2


def test_eval_architecture_mismatch(tmp_path, trained):
    cfg = tmp_path / "mismatch.toml"
    cfg.write_text("[trainer]\nactor_hidden = [16]\ncritic_hidden = [8]\n")
    code = main(["eval", "--checkpoint", str(trained / "checkpoint"), "--config", str(cfg), "--out", str(tmp_path / "e")])
    assert code != 0


def test_freeway_trace_has_ramp_phase(tmp_path, trained):
    cfg = tmp_path / "fw.toml"
    cfg.write_text("[scenario]\nkind = 'freeway'\nroad_length = 2500.0\nmax_steps = 40\nterminate_on_collision = false\n")
    out = tmp_path / "fw"
    assert main(["eval", "--checkpoint", str(trained / "checkpoint"), "--config", str(cfg), "--out", str(out)]) == 0
    assert "ramp_phase" in read_trace_csv(out / "trace.csv")


def test_fd_sweep_and_post_processing(tmp_path, trained):
    cfg = tmp_path / "ring.toml"
    cfg.write_text("[scenario]\nmax_steps = 40\nterminate_on_collision = false\n")
    out = tmp_path / "fd"
    ck = str(trained / "checkpoint")
    assert main(["fd-sweep", "--checkpoint", ck, "--config", str(cfg), "--counts", "8,20", "--out", str(out)]) == 0
    lines = (out / "fd_sweep.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[1].startswith("8,20.0,")
    assert main(["fd-sweep", "--checkpoint", ck, "--config", str(cfg), "--counts", "0", "--out", str(out)]) == 2

    ev = tmp_path / "ev"
    assert main(["eval", "--checkpoint", ck, "--config", str(cfg), "--out", str(ev)]) == 0
    trace = str(ev / "trace.csv")
    assert main(["heatmap", trace, "--mode", "actual", "--axis", "space", "--out", str(tmp_path / "hm")]) == 0
    assert (tmp_path / "hm" / "heatmap_actual_space.csv").is_file()
    assert main(["sort-score", trace, "--out", str(tmp_path / "ss")]) == 0
    assert (tmp_path / "ss" / "sort_score.csv").read_text().startswith("episode,score\n")
    assert main(["heatmap", str(tmp_path / "none.csv"), "--out", str(tmp_path / "hm")]) == 2


def test_outputs_use_lf(trained):
    for p in trained.glob("*.csv"):
        assert b"\r\n" not in p.read_bytes()


def test_identical_invocations_are_byte_identical(tmp_path, tiny_config):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["train", "--config", str(tiny_config), "--out", str(out), "--seed", "3"]) == 0
        assert main(["eval", "--checkpoint", str(out / "checkpoint"), "--config", str(tiny_config),
                     "--out", str(out / "eval"), "--seed", "5"]) == 0
        outs.append(out)
    for name in ("training_log.csv", "reward_curve.csv", "collision_bins.csv", "eval/trace.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    assert np.any(read_trace_csv(outs[0] / "eval/trace.csv")["x"] > 0)
