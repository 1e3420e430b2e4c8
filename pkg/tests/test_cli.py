import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from mixopt.cli import RunConfig, load_config, main
from mixopt.errors import ConfigError


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def tiny_train_section():
    return {
        "steps": 3,
        "batch_size": 32,
        "hidden": [8, 8],
        "counts": {"interior": 60, "per_boundary": 4, "per_slice": 8},
        "seed": 1,
    }


@pytest.fixture(scope="module")
def tiny_checkpoint(tmp_path_factory):
    # handcrafted near-constant net with positive inlet pressure and c in
    # (0, 1), so every metrics guard passes without a real training run
    from mixopt.diffnet import InputNorm, NetworkSpec, init_params
    from mixopt.pinn_train import save_checkpoint
    from mixopt.sampling import SampleBounds

    spec = NetworkSpec(hidden=(8, 8))
    norm = InputNorm.from_bounds(SampleBounds().pairs())
    params = init_params(spec, norm=norm, seed=3)
    params = params.with_flat(params.flat.copy())
    W, b = params.views()[-1]
    W *= 0.05
    b[2] = 2.0   # p
    b[6] = 0.55  # c
    tmp = tmp_path_factory.mktemp("ckpt")
    cfg = write_config(tmp, {"train": tiny_train_section()})
    out = str(tmp / "field.ckpt")
    save_checkpoint(params, out)
    return out, cfg


def test_default_config_loads():
    cfg = load_config(None)
    assert isinstance(cfg, RunConfig)
    assert cfg.train.steps == 5000
    assert cfg.ppo.episodes == 100
    assert cfg.ga.population == 32
    assert cfg.metrics.outlet_samples == 101


def test_config_overrides_nested(tmp_path):
    path = write_config(tmp_path, {
        "schema_version": 1,
        "train": {"steps": 7, "hidden": [16, 16], "counts": {"interior": 100}},
        "ppo": {"episodes": 5, "actor_hidden": [4]},
        "ga": {"population": 6},
        "metrics": {"outlet_samples": 11},
    })
    cfg = load_config(path)
    assert cfg.train.steps == 7
    assert cfg.train.hidden == (16, 16)
    assert cfg.train.counts.interior == 100
    assert cfg.train.counts.per_boundary == 80  # untouched default
    assert cfg.ppo.episodes == 5
    assert cfg.ppo.actor_hidden == (4,)
    assert cfg.ga.population == 6
    assert cfg.metrics.outlet_samples == 11


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError, match="config.trian"):
        load_config(write_config(tmp_path, {"trian": {}}, "a.json"))
    with pytest.raises(ConfigError, match="config.train.step_count"):
        load_config(write_config(tmp_path, {"train": {"step_count": 9}}, "b.json"))


def test_bad_schema_version(tmp_path):
    with pytest.raises(ConfigError, match="schema_version"):
        load_config(write_config(tmp_path, {"schema_version": 2}))


def test_bad_json_and_bad_values(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(str(broken))
    with pytest.raises(ConfigError, match="config.train"):
        load_config(write_config(tmp_path, {"train": {"steps": -5}}, "neg.json"))


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, {"nonsense": 1})
    rc = main(["--config", cfg, "geometry", "--cp", "0", "0", "0",
               "--out", str(tmp_path / "g.csv")])
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "ConfigError"
    assert "nonsense" in err["message"]


def test_geometry_straight_channel(tmp_path, capsys):
    out = tmp_path / "boundary.csv"
    rc = main(["geometry", "--cp", "0", "0", "0", "--out", str(out)])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out.strip())
    assert summary["rows"] > 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == summary["rows"]
    ys = {float(r["y_mm"]) for r in rows if r["segment"].startswith("baffle")}
    assert ys <= {0.0, 0.3}  # flat spline hugs the walls


def test_geometry_round_trips_floats(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["geometry", "--cp", "0.31", "-0.22", "0.13", "--out", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    # repr round trip: float(str(x)) == x for every numeric cell
    for r in rows[:50]:
        for k in ("x_mm", "y_mm", "nx", "ny"):
            assert repr(float(r[k])) == r[k]


def test_geometry_bad_cp_exits_2(tmp_path, capsys):
    rc = main(["geometry", "--cp", "0.9", "0", "0", "--out", str(tmp_path / "x.csv")])
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert "cp1" in err["message"]


def test_missing_required_arg_exits_2(capsys):
    rc = main(["geometry", "--cp", "0", "0", "0"])
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "ArgumentError"


def test_train_writes_checkpoint_and_history(tmp_path, capsys):
    cfg = write_config(tmp_path, {"train": tiny_train_section()})
    out = tmp_path / "net.ckpt"
    hist = tmp_path / "loss.csv"
    rc = main(["--config", cfg, "train", "--out", str(out), "--history", str(hist)])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out.strip())
    assert summary["aborted_at"] is None
    assert np.isfinite(summary["final_total"])
    lines = hist.read_text().strip().splitlines()
    assert lines[0] == "step,total"
    assert len(lines) >= 3
    from mixopt.pinn_train import load_checkpoint
    params = load_checkpoint(str(out))
    assert params.spec.hidden == (8, 8)


def test_train_deterministic_checkpoints(tmp_path):
    cfg = write_config(tmp_path, {"train": tiny_train_section()})
    a = tmp_path / "a.ckpt"
    b = tmp_path / "b.ckpt"
    assert main(["--config", cfg, "train", "--out", str(a)]) == 0
    assert main(["--config", cfg, "train", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_evaluate_self_baseline_unity(tiny_checkpoint, tmp_path, capsys):
    ckpt, cfg = tiny_checkpoint
    fields = tmp_path / "fields.csv"
    report = tmp_path / "report.json"
    rc = main(["--config", cfg, "evaluate", "--checkpoint", ckpt,
               "--cp", "0", "0", "0", "--re", "10", "--sc", "10",
               "--fields", str(fields), "--report", str(report)])
    assert rc == 0
    payload = json.loads(report.read_text())
    assert payload["me"] == pytest.approx(1.0, abs=1e-12)
    assert all(np.isfinite(payload[k]) for k in ("mi", "cp", "mi0", "cp0", "me"))
    with open(fields) as fh:
        rows = list(csv.DictReader(fh))
    assert rows and set(rows[0]) == {"x", "y", "u", "v", "speed", "p", "c", "inside"}
    capsys.readouterr()


def test_evaluate_masks_baffle_cells(tiny_checkpoint, tmp_path, capsys):
    ckpt, cfg = tiny_checkpoint
    fields = tmp_path / "fields.csv"
    rc = main(["--config", cfg, "evaluate", "--checkpoint", ckpt,
               "--cp", "0.5", "0.5", "0.5", "--re", "10", "--sc", "10",
               "--fields", str(fields)])
    assert rc == 0
    with open(fields) as fh:
        rows = list(csv.DictReader(fh))
    assert any(r["inside"] == "0" for r in rows)
    capsys.readouterr()


def test_optimize_and_query_round_trip(tmp_path, capsys):
    cfg = write_config(tmp_path, {"ppo": {"episodes": 3, "batch_size": 8,
                                          "actor_hidden": [8], "critic_hidden": [8]}})
    actor = tmp_path / "actor.ckpt"
    hist = tmp_path / "rewards.csv"
    rc = main(["--config", cfg, "optimize-rl", "--synthetic",
               "--out", str(actor), "--history", str(hist)])
    assert rc == 0
    assert hist.read_text().startswith("episode,mean_reward,smoothed_reward")

    out1 = tmp_path / "designs1.csv"
    out2 = tmp_path / "designs2.csv"
    for out in (out1, out2):
        rc = main(["query", "--policy", str(actor), "--sc", "10,40,70", "--out", str(out)])
        assert rc == 0
    assert out1.read_bytes() == out2.read_bytes()
    with open(out1) as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["sc"]) for r in rows] == [10.0, 40.0, 70.0]
    for r in rows:
        assert -0.5 <= float(r["cp1"]) <= 0.5
        assert 5.0 <= float(r["re"]) <= 40.0
        assert np.isnan(float(r["relative_me"]))  # no field checkpoint given
    capsys.readouterr()


def test_query_with_field_checkpoint_fills_me(tiny_checkpoint, tmp_path, capsys):
    ckpt, cfg = tiny_checkpoint
    ppo_cfg = write_config(tmp_path, {"ppo": {"episodes": 2, "batch_size": 8,
                                              "actor_hidden": [8], "critic_hidden": [8]}})
    actor = tmp_path / "actor.ckpt"
    assert main(["--config", ppo_cfg, "optimize-rl", "--synthetic",
                 "--out", str(actor)]) == 0
    out = tmp_path / "designs.csv"
    rc = main(["--config", cfg, "query", "--policy", str(actor), "--sc", "25",
               "--out", str(out), "--checkpoint", ckpt])
    assert rc == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert np.isfinite(float(rows[0]["relative_me"]))
    capsys.readouterr()


def test_query_and_compare_reject_critic_checkpoint(tmp_path, capsys):
    cfg = write_config(tmp_path, {"ppo": {"episodes": 2, "batch_size": 8,
                                          "actor_hidden": [8], "critic_hidden": [8]}})
    actor = tmp_path / "actor.ckpt"
    critic = tmp_path / "critic.ckpt"
    assert main(["--config", cfg, "optimize-rl", "--synthetic", "--out", str(actor),
                 "--critic-out", str(critic)]) == 0
    rc = main(["query", "--policy", str(critic), "--sc", "10",
               "--out", str(tmp_path / "d.csv")])
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "CheckpointError"
    rc = main(["compare", "--policy", str(critic), "--synthetic", "--sc", "10,20",
               "--out", str(tmp_path / "s.csv")])
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "CheckpointError"


def test_optimize_rl_requires_an_environment(tmp_path, capsys):
    rc = main(["optimize-rl", "--out", str(tmp_path / "a.ckpt")])
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert "synthetic" in err["message"]


def test_compare_synthetic(tmp_path, capsys):
    cfg = write_config(tmp_path, {
        "ppo": {"episodes": 2, "batch_size": 8, "actor_hidden": [8], "critic_hidden": [8]},
        "ga": {"population": 6, "generations": 3},
    })
    actor = tmp_path / "actor.ckpt"
    assert main(["--config", cfg, "optimize-rl", "--synthetic", "--out", str(actor)]) == 0
    out = tmp_path / "scaling.csv"
    rc = main(["--config", cfg, "compare", "--policy", str(actor), "--synthetic",
               "--sc", "10,30,60,90", "--out", str(out), "--repeats", "1"])
    assert rc == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["m"]) for r in rows] == [1, 2, 4]
    assert all(float(r["ga_cumulative_seconds"]) > 0 for r in rows)
    capsys.readouterr()


def test_console_module_invocation(tmp_path):
    out = tmp_path / "b.csv"
    proc = subprocess.run([sys.executable, "-m", "mixopt.cli", "geometry",
                           "--cp", "0", "0", "0", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert out.exists()
    assert json.loads(proc.stdout.strip())["command"] == "geometry"
