"""Command-line contracts: exit codes, file outputs, byte-identical reruns."""

import json

import numpy as np
import pytest

from svsensor import GainMap, RadianceMap, SensorConfig, simulate_capture
from svsensor.cli import main
from svsensor.fileio import (load_capture, read_pgm16, save_gain_stack,
                             save_json, write_pfm)
from svsensor.readout import GainStack


@pytest.fixture
def scene_path(tmp_path):
    rng = np.random.default_rng(120)
    img = rng.uniform(0.5, 800.0, (64, 64)).astype(np.float32)
    path = tmp_path / "scene.pfm"
    write_pfm(path, img)
    return str(path)


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "sensor.json"
    path.write_text(SensorConfig().to_json())
    return str(path)


def test_unknown_flag_exits_2_without_output(tmp_path, scene_path):
    out = tmp_path / "cap"
    code = main(["simulate", scene_path, "--seed", "1",
                 "--output", str(out), "--frobnicate"])
    assert code == 2
    assert not out.with_suffix(".pgm").exists()


def test_missing_subcommand_exits_2():
    assert main([]) == 2


def test_simulate_writes_capture_pair(tmp_path, scene_path, config_path):
    out = tmp_path / "cap"
    est = tmp_path / "est.pfm"
    code = main(["simulate", scene_path, "--config", config_path,
                 "--gain", "2.0", "--seed", "7", "--output", str(out),
                 "--estimate", str(est)])
    assert code == 0
    digits = read_pgm16(out.with_suffix(".pgm"))
    assert digits.shape == (64, 64)
    sidecar = json.loads(out.with_suffix(".json").read_text())
    assert sidecar["seed"] == 7
    assert est.exists()


def test_reruns_are_byte_identical(tmp_path, scene_path, config_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["simulate", scene_path, "--config", config_path,
                     "--gain", "2.0", "--seed", "7",
                     "--output", str(out)]) == 0
    assert a.with_suffix(".pgm").read_bytes() == b.with_suffix(".pgm").read_bytes()
    assert a.with_suffix(".json").read_bytes() == b.with_suffix(".json").read_bytes()


def test_thread_count_does_not_change_output(tmp_path, scene_path, config_path):
    outs = []
    for threads, name in [("1", "t1"), ("8", "t8")]:
        gm_path = tmp_path / "gm.json"
        save_json(gm_path, GainMap("per_roi", np.full((2, 2), 2.0),
                                   roi_size=32).to_json_dict())
        out = tmp_path / name
        assert main(["capture", scene_path, "--config", config_path,
                     "--gain-map", str(gm_path), "--seed", "3",
                     "--threads", threads, "--output", str(out)]) == 0
        outs.append(out.with_suffix(".pgm").read_bytes())
    assert outs[0] == outs[1]


def test_capture_grid_mismatch_exits_3(tmp_path, scene_path, config_path):
    gm_path = tmp_path / "gm.json"
    bm_path = tmp_path / "bm.json"
    save_json(gm_path, GainMap("per_roi", np.full((2, 2), 2.0),
                               roi_size=32).to_json_dict())
    from svsensor import BinMap
    save_json(bm_path, BinMap(roi_size=16,
                              factors=np.ones((4, 4), dtype=int),
                              mode="digital").to_json_dict())
    code = main(["capture", scene_path, "--config", config_path,
                 "--gain-map", str(gm_path), "--bin-map", str(bm_path),
                 "--seed", "3", "--output", str(tmp_path / "cap")])
    assert code == 3


def test_capture_per_pixel_mode(tmp_path, scene_path, config_path):
    out = tmp_path / "pp"
    code = main(["capture", scene_path, "--config", config_path,
                 "--per-pixel-eta", "4.0", "--seed", "5",
                 "--output", str(out)])
    assert code == 0
    sidecar = json.loads(out.with_suffix(".json").read_text())
    assert sidecar["meta"]["strategy"] == "per_pixel"


def test_plan_gain_from_pilot(tmp_path, scene_path, config_path):
    pilot = tmp_path / "pilot"
    assert main(["simulate", scene_path, "--config", config_path,
                 "--gain", "1.0", "--seed", "2", "--output", str(pilot)]) == 0
    plan = tmp_path / "plan.json"
    code = main(["plan-gain", "--config", config_path, "--pilot", str(pilot),
                 "--roi-size", "32", "--eta", "2.0", "--output", str(plan)])
    assert code == 0
    doc = json.loads(plan.read_text())
    assert doc["mode"] == "per_roi"
    assert doc["shape"] == [2, 2]
    assert all(1.0 <= g <= 27.0 for g in doc["values"])


def test_plan_gain_without_inputs_exits_2(tmp_path, config_path):
    code = main(["plan-gain", "--config", config_path,
                 "--output", str(tmp_path / "x.json")])
    assert code == 2


def test_plan_bin_writes_factors(tmp_path, scene_path, config_path):
    pilot = tmp_path / "pilot"
    assert main(["simulate", scene_path, "--config", config_path,
                 "--gain", "1.0", "--seed", "2", "--output", str(pilot)]) == 0
    plan = tmp_path / "bins.json"
    code = main(["plan-bin", "--config", config_path, "--pilot", str(pilot),
                 "--roi-size", "32", "--output", str(plan)])
    assert code == 0
    doc = json.loads(plan.read_text())
    assert doc["mode"] == "additive"
    assert all(k in (1, 2, 4, 8) for k in doc["values"])


def test_theory_csv_monotone_curve(tmp_path, config_path, capsys):
    code = main(["theory", "--config", config_path, "--snr-t", "4",
                 "--pitches", "0.5,1,2,4",
                 "--lights", ",".join(str(v) for v in
                                      np.geomspace(0.3, 3000, 12))])
    assert code == 0
    out = capsys.readouterr().out
    lines = out.strip().splitlines()
    assert lines[0] == "l0,p,f_cutoff"
    # second table: p_star non-increasing with light level
    start = lines.index("l0,p_star,N")
    stars = [float(r.split(",")[1]) for r in lines[start + 1:]
             if r.split(",")[1]]
    assert all(a >= b for a, b in zip(stars, stars[1:]))


def test_theory_rejects_bad_grid(config_path):
    code = main(["theory", "--config", config_path,
                 "--pitches", "2,1", "--lights", "1,2"])
    assert code == 2


def test_calibrate_end_to_end(tmp_path, config_path):
    config = SensorConfig()
    dark = RadianceMap(data=np.zeros((48, 48)))
    entries = []
    for i, g in enumerate(np.geomspace(1.0, 27.0, 6)):
        frames = []
        for j in range(30):
            raw = simulate_capture(dark, float(g), None, config,
                                   seed=131 + 100 * i + j)
            p = tmp_path / f"d{i}_{j}.pgm"
            from svsensor.fileio import write_pgm16
            write_pgm16(p, raw.digits)
            frames.append(str(p))
        entries.append({"gain": float(g), "frames": frames})
    manifest = tmp_path / "manifest.json"
    save_json(manifest, {"gains": entries})
    out = tmp_path / "profile.json"
    code = main(["calibrate", "--config", config_path, "--manifest",
                 str(manifest), "--electrons", "--output", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["units"] == "electrons"
    assert abs(doc["sigma_post"] - 3.31) / 3.31 < 0.15


def test_compose_from_stack_directory(tmp_path, config_path):
    config = SensorConfig()
    scene = RadianceMap(data=np.full((64, 64), 80.0))
    frames = tuple(simulate_capture(scene, g, None, config, seed=140 + i)
                   for i, g in enumerate([1.0, 4.0]))
    stack_dir = tmp_path / "stack"
    save_gain_stack(stack_dir, GainStack(gains=(1.0, 4.0), frames=frames))
    gm_path = tmp_path / "plan.json"
    save_json(gm_path, GainMap("per_roi", np.array([[1.0, 4.0], [4.0, 1.0]]),
                               roi_size=32).to_json_dict())
    out = tmp_path / "composed"
    code = main(["compose", "--config", config_path, "--stack",
                 str(stack_dir), "--gain-map", str(gm_path),
                 "--output", str(out)])
    assert code == 0
    composed = load_capture(out, config)
    assert np.array_equal(composed.digits[:32, :32],
                          frames[0].digits[:32, :32])
    assert np.array_equal(composed.digits[:32, 32:],
                          frames[1].digits[:32, 32:])


def test_evaluate_writes_report(tmp_path, scene_path, config_path):
    out = tmp_path / "report.json"
    csv = tmp_path / "report.csv"
    dump = tmp_path / "dumps"
    code = main(["evaluate", scene_path, "--config", config_path,
                 "--roi-size", "32", "--seed", "17", "--mean-frac", "0.05",
                 "--output", str(out), "--csv", str(csv),
                 "--dump-dir", str(dump)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert set(doc["methods"]) == {
        "const_gain_no_bin", "vary_gain_no_bin",
        "const_gain_vary_bin", "vary_gain_vary_bin"}
    assert csv.read_text().startswith("method,")
    rendered = sorted(p.name for p in dump.glob("*.pgm"))
    assert "ground_truth.pgm" in rendered
    assert "vary_gain_vary_bin.pgm" in rendered
    assert read_pgm16(dump / "ground_truth.pgm").shape == (64, 64)
