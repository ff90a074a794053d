import json
from pathlib import Path

import numpy as np
import pytest

from trafusion import io as tio
from trafusion.cli import main

DESK_SMALL = """
[domain]
x_min_m = 0.0
x_max_m = 4000.0
t_min_s = 0.0
t_max_s = 3600.0

[traffic]
free_speed_kmh = 100.0

[[traffic.moving_jams]]
origin_m = 3500.0
onset_s = 600.0
width_m = 600.0
jam_speed_kmh = 10.0

[sensors]
loop_positions_m = [500.0, 1500.0, 2500.0, 3500.0]
bt_positions_m = [250.0, 2000.0, 3750.0]
fcd_penetration = 0.08
demand_veh_per_h = 1500.0
bt_veh_per_h = 240.0
"""


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    cfg = out / "scenario_in.toml"
    cfg.write_text(DESK_SMALL)
    rc = main(["synth", "--config", str(cfg), "--out-dir", str(out / "data"), "--seed", "5"])
    assert rc == 0
    return out / "data"


def test_synth_writes_five_files(synth_dir):
    names = sorted(p.name for p in synth_dir.iterdir())
    assert names == ["bt.csv", "fcd.csv", "loops.csv", "scenario.toml", "truth.csv"]


def test_synth_seed_repeat_byte_identical(tmp_path, synth_dir):
    cfg = tmp_path / "scenario_in.toml"
    cfg.write_text(DESK_SMALL)
    rc = main(["synth", "--config", str(cfg), "--out-dir", str(tmp_path / "again"), "--seed", "5"])
    assert rc == 0
    for name in ("loops.csv", "fcd.csv", "bt.csv", "truth.csv"):
        assert (tmp_path / "again" / name).read_bytes() == (synth_dir / name).read_bytes()


def test_synth_different_seed_differs(tmp_path):
    cfg = tmp_path / "scenario_in.toml"
    cfg.write_text(DESK_SMALL)
    main(["synth", "--config", str(cfg), "--out-dir", str(tmp_path / "a"), "--seed", "1"])
    main(["synth", "--config", str(cfg), "--out-dir", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "fcd.csv").read_bytes() != (tmp_path / "b" / "fcd.csv").read_bytes()


def test_synth_missing_key_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[domain]\nx_min_m = 0.0\n")
    rc = main(["synth", "--config", str(cfg), "--out-dir", str(tmp_path / "out")])
    assert rc == 2
    assert "x_max_m" in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["reconstruct", "--algorithm", "nope", "--out", "x.csv"])
    assert exc.value.code == 1


def test_reconstruct_loops_asm(synth_dir, tmp_path):
    out = tmp_path / "est.csv"
    rc = main([
        "reconstruct",
        "--input-loops", str(synth_dir / "loops.csv"),
        "--algorithm", "asm",
        "--out", str(out),
    ])
    assert rc == 0
    field = tio.read_field_csv(out, weights_path=tmp_path / "est_weights.csv")
    assert np.all(np.isfinite(field.values))
    assert field.values.min() > 0


def test_reconstruct_deterministic(synth_dir, tmp_path):
    args = [
        "reconstruct",
        "--input-loops", str(synth_dir / "loops.csv"),
        "--input-fcd", str(synth_dir / "fcd.csv"),
        "--algorithm", "psm",
    ]
    main(args + ["--out", str(tmp_path / "a.csv")])
    main(args + ["--out", str(tmp_path / "b.csv")])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_reconstruct_psmw_without_bt_falls_back(synth_dir, tmp_path, caplog):
    rc = main([
        "reconstruct",
        "--input-loops", str(synth_dir / "loops.csv"),
        "--algorithm", "psmw",
        "--out", str(tmp_path / "est.csv"),
    ])
    assert rc == 0
    assert any("falls back" in r.message for r in caplog.records)


def test_reconstruct_empty_csv_data_error(tmp_path):
    empty = tmp_path / "loops.csv"
    empty.write_text("detector_id,position_m,timestamp_s,speed_mps\n")
    rc = main(["reconstruct", "--input-loops", str(empty),
               "--algorithm", "asm", "--out", str(tmp_path / "o.csv")])
    assert rc == 2


def test_evaluate_smoke_counts(synth_dir, tmp_path):
    out = tmp_path / "eval"
    rc = main([
        "evaluate",
        "--input-loops", str(synth_dir / "loops.csv"),
        "--input-fcd", str(synth_dir / "fcd.csv"),
        "--input-bt", str(synth_dir / "bt.csv"),
        "--runs", "1", "--seed", "3",
        "--out-dir", str(out),
    ])
    assert rc == 0
    rows = (out / "results.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 7 * 4  # header + combos x algorithms
    assert (out / "aggregate.csv").exists()
    assert (out / "best_per_combination.csv").exists()
    assert (out / "best_per_algorithm.csv").exists()


def test_evaluate_without_bt_three_combos(synth_dir, tmp_path):
    out = tmp_path / "eval_nobt"
    rc = main([
        "evaluate",
        "--input-loops", str(synth_dir / "loops.csv"),
        "--input-fcd", str(synth_dir / "fcd.csv"),
        "--runs", "1", "--seed", "3",
        "--algorithms", "secavg,asm",
        "--out-dir", str(out),
    ])
    assert rc == 0
    rows = (out / "results.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 3 * 2  # LOOP, FCD, LOOP+FCD x two algorithms


def test_evaluate_json_format(synth_dir, tmp_path):
    out = tmp_path / "eval_json"
    rc = main([
        "evaluate",
        "--input-loops", str(synth_dir / "loops.csv"),
        "--input-bt", str(synth_dir / "bt.csv"),
        "--runs", "1", "--seed", "0",
        "--algorithms", "secavg",
        "--format", "json",
        "--out-dir", str(out),
    ])
    assert rc == 0
    rows = json.loads((out / "results.json").read_text())
    assert {r["sensors"] for r in rows} == {"LOOP", "BT", "LOOP+BT"}
