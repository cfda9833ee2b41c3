import sys
import os
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)

import json

import numpy as np
import pandas as pd
import pytest

from src.cli.main import main
from src.cli.selftest import build_checks
from src.dsp.audio_io import read_wav, write_wav
from src.training.runs import CHECKPOINT_NAME
from src.utils.images import read_pgm

SMOKE = os.path.join(project_root, "config", "smoke.conf")


def _last_json(capsys):
    lines = [line for line in capsys.readouterr().out.splitlines() if line.strip()]
    return json.loads(lines[-1])


def test_help_lists_config_keys(capsys):
    with pytest.raises(SystemExit) as exit_info:
        main(["--help"])
    assert exit_info.value.code == 0
    out = capsys.readouterr().out
    for key in ("n_scenes", "dilation_scale", "input_mics", "lambda2", "normalization"):
        assert key in out


def test_missing_checkpoint_is_a_user_error(tmp_path, capsys):
    code = main(["eval", "--config", SMOKE, "--checkpoint", str(tmp_path / "missing.bapn")])
    assert code == 2
    assert _last_json(capsys)["error"] == "CheckpointCorrupt"


def test_bad_override_is_a_user_error(tmp_path, capsys):
    code = main(["gen", "--config", SMOKE, "--set", "n_scenes=0", "--out", str(tmp_path)])
    assert code == 2
    assert _last_json(capsys)["error"] == "BadConfig"
    assert main(["gen", "--config", SMOKE, "--set", "no_such_key=1", "--out", str(tmp_path)]) == 2


def test_gen_writes_manifests(tmp_path, capsys):
    code = main(["gen", "--config", SMOKE, "--set", "n_scenes=3", "--set", "duration=0.25", "--out", str(tmp_path)])
    assert code == 0
    summary = _last_json(capsys)
    assert sum(summary["scenes"].values()) == 3
    for split in ("train", "val", "test"):
        assert (tmp_path / split / "manifest.json").is_file()


def test_labels_from_simulation(tmp_path, capsys):
    code = main(["labels", "--config", SMOKE, "--from-sim", "2", "--frames", "9", "--out", str(tmp_path)])
    assert code == 0
    summary = _last_json(capsys)
    assert summary["frames"] == 9 and summary["frame"] == 4
    for name in ("frame", "background", "mask", "target"):
        assert read_pgm(tmp_path / f"{name}.pgm").shape == (8, 16)
    assert set(read_pgm(tmp_path / "target.pgm").ravel()) <= {0, 1, 2, 3}
    assert json.loads((tmp_path / "class_table.json").read_text())


def test_labels_frame_out_of_range(tmp_path, capsys):
    code = main(["labels", "--config", SMOKE, "--frames", "3", "--frame", "5", "--out", str(tmp_path)])
    assert code == 2
    assert _last_json(capsys)["error"] == "BadConfig"


def test_labels_input_needs_class_table(tmp_path, capsys):
    assert main(["labels", "--config", SMOKE, "--input", str(tmp_path), "--out", str(tmp_path / "out")]) == 2
    assert _last_json(capsys)["error"] == "BadConfig"


def _tiny(data_root):
    values = ["n_scenes=4", "splits=50,25,25", "duration=0.25", "window=128", "hop=64",
              "epochs=1", f"data_root={data_root}"]
    return [arg for value in values for arg in ("--set", value)]


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_data")
    assert main(["gen", "--config", SMOKE, *_tiny(root), "--out", str(root)]) == 0
    return root


def test_ablate_minimal_grid(tiny_data, tmp_path, capsys):
    out = tmp_path / "ablation"
    code = main(["ablate", "--config", SMOKE, *_tiny(tiny_data), "--grid", "minimal", "--seeds", "1", "--out", str(out)])
    assert code == 0
    assert "binaural" in capsys.readouterr().out
    table = pd.read_csv(out / "ablation.csv")
    assert table["cell"].tolist() == ["mono", "binaural"]
    assert table["status"].tolist() == ["ok", "ok"]
    assert table["median_miou"].between(0.0, 1.0).all()
    assert (out / "ablation.json").is_file() and (out / "mono" / "seed_0").is_dir()


def test_infer_s3r_rejects_a_silent_recording(tiny_data, tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["train", "--config", SMOKE, *_tiny(tiny_data), "--set", "max_steps=1", "--out", str(run)]) == 0
    capsys.readouterr()
    recorded, rate = read_wav(next((tiny_data / "train").rglob("audio_pair0.wav")))
    silent = write_wav(tmp_path / "silent.wav", np.zeros_like(recorded), rate)

    code = main(["infer-s3r", "--config", SMOKE, "--checkpoint", str(run / CHECKPOINT_NAME),
                 "--input", str(silent), "--out", str(tmp_path / "pred")])
    assert code == 2
    assert _last_json(capsys)["error"] == "SilentInput"
    assert not (tmp_path / "pred").exists()


@pytest.mark.parametrize("name", ["ILD", "distance energy", "tiny model weights per part", "rotation equivariance"])
def test_selftest_checks_pass(name):
    checks = {check: fn for _, check, fn in build_checks()}
    passed, detail = checks[name]()
    assert passed, detail


def test_selftest_sections():
    sections = {section for section, _, _ in build_checks("some.bapn")}
    assert sections == {"round-trip", "grad-check", "oracle", "simulator", "checkpoint"}
