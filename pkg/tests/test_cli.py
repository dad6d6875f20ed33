import json
import shlex
import sys

import numpy as np
import pytest

from larsen.core import TimeSignal
from larsen.io import read_tensor, read_wav, write_wav
from larsen.scripts.larsen import main

PEER = f"{shlex.quote(sys.executable)} -m larsen.scripts.peer"


def stream(output, *args):
    return main(["stream", "--scalar", "0.0", "--duration", "1", "--output", str(output), "--quiet", *args])


def test_stream_outputs(tmp_path):
    assert stream(tmp_path, "--suppressor", "none") == 0
    for name in ("y.wav", "s_hat.wav", "x.wav", "d.wav", "s.wav", "frames.csv", "metrics.json", "meta.json"):
        assert (tmp_path / name).is_file()
    assert read_tensor(tmp_path / "y_magnitude.ahsf").shape[1] == 257
    with open(tmp_path / "metrics.json") as f:
        metrics = json.load(f)
    assert metrics["gain"] == 0 and not metrics["saturated"]
    with open(tmp_path / "meta.json") as f:
        assert json.load(f)["estimates"] == {"none": "s_hat.wav"}

    assert stream(tmp_path, "--suppressor", "none") == 1
    assert stream(tmp_path, "--suppressor", "none", "--force") == 0


def test_external_matches_passthrough(tmp_path):
    assert stream(tmp_path / "none", "--suppressor", "none") == 0
    code = stream(tmp_path / "echo", "--suppressor", "external", "--cmd", f"{PEER} --mode echo", "--deadline", "2")
    assert code == 0
    for name in ("y", "s_hat"):
        a = read_wav(tmp_path / "none" / f"{name}.wav").samples
        b = read_wav(tmp_path / "echo" / f"{name}.wav").samples
        assert np.array_equal(a, b)


def test_exit_codes(tmp_path):
    assert stream(tmp_path / "a", "--suppressor", "external") == 1
    assert stream(tmp_path / "b", "--preset", "soft", "--gain-schedule", "g.json") == 1
    assert stream(tmp_path / "c", "--suppressor", "kalman", "--params", "[1, 2]") == 1
    assert stream(tmp_path / "d", "--suppressor", "external", "--cmd", f"{PEER} --mode bad-magic") == 4
    assert stream(tmp_path / "e", "--suppressor", "external", "--cmd", f"{PEER} --mode truncate --fail-at 5") == 4
    assert not (tmp_path / "e" / "metrics.json").exists()
    assert main(["evaluate", str(tmp_path / "missing")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["howl"])
    assert exc.value.code == 1


def test_stream_with_preset(tmp_path):
    code = main(
        ["stream", "--scalar", "0.5", "--preset", "soft", "--suppressor", "gain_limiter", "--duration", "1",
         "--output", str(tmp_path), "--quiet"]
    )
    assert code == 0
    with open(tmp_path / "metrics.json") as f:
        metrics = json.load(f)
    assert metrics["gain_schedule"] == [[0.0, 1.0], [2.0, 1.1], [4.0, 1.2]]


def test_evaluate_empty_folder(tmp_path):
    assert main(["evaluate", str(tmp_path)]) == 0
    assert not (tmp_path / "evaluation.csv").exists()


def test_evaluate_stream(tmp_path):
    assert stream(tmp_path, "--suppressor", "none") == 0
    assert main(["evaluate", str(tmp_path), "--quiet"]) == 0
    with open(tmp_path / "summary.json") as f:
        summary = json.load(f)
    assert summary


def test_detect_howl(tmp_path):
    t = np.arange(4 * 16000) / 16000
    write_wav(tmp_path / "howl.wav", TimeSignal(0.01 * 10 ** (6 * t / 20) * np.sin(2 * np.pi * 2000 * t)))
    write_wav(tmp_path / "silence.wav", TimeSignal.zeros(16000))
    assert main(["detect-howl", str(tmp_path / "howl.wav"), "--output", str(tmp_path / "howl.json")]) == 0
    with open(tmp_path / "howl.json") as f:
        report = json.load(f)
    assert report["detected"] and report["peak_frequency_hz"] == pytest.approx(2000, abs=32)
    assert main(["detect-howl", str(tmp_path / "silence.wav"), "--output", str(tmp_path / "silence.json")]) == 0
    with open(tmp_path / "silence.json") as f:
        assert not json.load(f)["detected"]
    assert main(["detect-howl", str(tmp_path / "missing.wav")]) == 2


def test_export_features_needs_kalman_output(tmp_path):
    assert stream(tmp_path, "--suppressor", "none") == 0
    assert main(["export-features", str(tmp_path)]) == 2
    assert main(["export-features", str(tmp_path / "nothing")]) == 2


def test_dataset_pipeline(tmp_path):
    output = tmp_path / "dataset"
    args = ["--synthetic", "3", "--counts", "1", "1", "1", "--duration", "0.5", "--seed", "5", "--output", str(output), "--quiet"]
    assert main(["gen-dataset", *args]) == 0
    assert main(["gen-dataset", *args]) == 1

    assert main(["export-features", str(output), "--mode", "lps", "--quiet"]) == 0
    features = read_tensor(output / "val/00000" / "features.ahsf")
    labels = read_tensor(output / "val/00000" / "labels.ahsf")
    with open(output / "val/00000" / "features.json") as f:
        layout = json.load(f)
    assert features.shape == (layout["frames"], 2 * 257)
    assert labels.shape == (2, layout["frames"], 257)
    assert layout["kalman_reference"] == "teacher_forced"

    assert main(["evaluate", str(output), "--quiet"]) == 0
    assert (output / "evaluation.csv").is_file()
    assert (output / "summary_mean.csv").is_file()

    stream_output = tmp_path / "stream"
    code = main(["stream", "--scenario", str(output / "test/00000"), "--suppressor", "kalman",
                 "--output", str(stream_output), "--quiet"])
    assert code == 0
    assert len(read_wav(stream_output / "y.wav")) == 8000

    assert main(["gen-rir", "-n", "2", "--seed", "5", "--output", str(tmp_path / "rirs"), "--quiet"]) == 0
    assert (tmp_path / "rirs" / "rirs/00001" / "geometry.json").is_file()
