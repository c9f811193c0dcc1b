import csv
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from arrayfeat.cli import main
from arrayfeat.io import parse_meta, read_features, read_labels, sidecar_path, write_labels, write_predictions
from arrayfeat.types import FrameTrack, GroundTruth


@pytest.fixture(scope="module")
def sim16(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim") / "s"
    assert main(["simulate", "--az", "10", "--snr", "20", "--seed", "7", "--duration", "1", "--out", str(out)]) == 0
    return out


def files_of(prefix):
    return [prefix.with_name(prefix.name + s) for s in (".wav", ".labels.csv", ".scene.txt", ".wav.meta")]


def test_simulate_outputs(sim16):
    for f in files_of(sim16):
        assert f.exists()
    meta = parse_meta(sidecar_path(sim16.with_name("s.wav")).read_text())
    assert meta["run.seed"] == "7" and meta["run.snr"] == "20.0"
    assert json.loads(meta["run.argv"])[0] == "simulate"
    labels = read_labels(sim16.with_name("s.labels.csv"))
    assert len(labels) == 30 and labels.active.any()


def test_simulate_is_deterministic(tmp_path, sim16):
    out = tmp_path / "s"
    main(["simulate", "--az", "10", "--snr", "20", "--seed", "7", "--duration", "1", "--out", str(out)])
    for a, b in zip(files_of(sim16)[:3], files_of(out)[:3]):
        assert a.read_bytes() == b.read_bytes()


def test_simulate_clean_by_default(tmp_path):
    main(["simulate", "--az", "0", "--duration", "0.5", "--end", "0.4", "--out", str(tmp_path / "c")])
    assert "snr_db=none" in (tmp_path / "c.scene.txt").read_text()


def test_snr_grid(tmp_path):
    assert main(["simulate", "--az", "-5", "--duration", "0.5", "--end", "0.4", "--mics", "4",
                 "--snr-grid", "0,10,20,30,40", "--out", str(tmp_path / "g")]) == 0
    wavs = sorted(p.name for p in tmp_path.glob("*.wav"))
    assert wavs == [f"g_snr{s}dB.wav" for s in ("0", "10", "20", "30", "40")]
    assert len(list(tmp_path.glob("*.labels.csv"))) == 5


def test_extract_salsa_lite(tmp_path, sim16):
    out = tmp_path / "f.aft"
    assert main(["extract", str(sim16.with_name("s.wav")), "--feat", "salsa-lite", "--mics", "16",
                 "--out", str(out)]) == 0
    feats = read_features(out)
    assert feats.shape == (16, 480, 64)
    assert feats.meta["variant"] == "lite" and feats.meta["run.feat"] == "salsa-lite"


def test_extract_gcc_all_has_121_channels(tmp_path, sim16):
    out = tmp_path / "g.aft"
    assert main(["extract", str(sim16.with_name("s.wav")), "--feat", "gcc", "--mode", "all",
                 "--mics", "16", "--out", str(out)]) == 0
    assert read_features(out).shape == (121, 480, 64)


@pytest.mark.parametrize("feat, channels", [("bf", 15), ("logmel", 1), ("loglin", 1), ("salsa-ipd", 16)])
def test_extract_other_features(tmp_path, sim16, feat, channels):
    out = tmp_path / "x.aft"
    assert main(["extract", str(sim16.with_name("s.wav")), "--feat", feat, "--out", str(out)]) == 0
    assert read_features(out).shape[0] == channels


def test_extract_rejects_17_mics(tmp_path, sim16, capsys):
    out = tmp_path / "bad.aft"
    assert main(["extract", str(sim16.with_name("s.wav")), "--feat", "salsa-lite", "--mics", "17",
                 "--out", str(out)]) != 0
    assert "--mics" in capsys.readouterr().err
    assert not out.exists() and not list(tmp_path.iterdir())


def test_extract_channel_mismatch(tmp_path, sim16):
    assert main(["extract", str(sim16.with_name("s.wav")), "--feat", "gcc", "--mics", "8",
                 "--out", str(tmp_path / "x.aft")]) != 0
    assert not list(tmp_path.iterdir())


def test_weights_file(tmp_path):
    out = tmp_path / "w.sdbw"
    assert main(["weights", "--preset", "dirs7", "--mics", "8", "--out", str(out)]) == 0
    assert out.read_bytes()[:4] == b"SDBW"
    assert "fingerprint" in parse_meta(sidecar_path(out).read_text())


def test_geometry_report(capsys):
    assert main(["geometry"]) == 0
    text = capsys.readouterr().out
    assert "max_lag=30" in text and "16,0.450" in text


def test_localize_then_eval(tmp_path, sim16, capsys):
    pred = tmp_path / "p.csv"
    assert main(["localize", str(sim16.with_name("s.wav")), "--out", str(pred)]) == 0
    assert main(["eval", "--pred", str(pred), "--gt", str(sim16.with_name("s.labels.csv")),
                 "--out", str(tmp_path / "e.txt"), "--curve", str(tmp_path / "pr.csv")]) == 0
    out = capsys.readouterr().out
    assert "F1@2deg=" in out and "AP=" in out and "aD=" in out and "DetErr=" in out
    assert (tmp_path / "pr.csv").exists()


def test_eval_perfect(tmp_path, capsys):
    gt = GroundTruth(np.array([True, False, True]), np.array([0.4, np.nan, 0.6]))
    write_labels(tmp_path / "gt.csv", gt)
    write_predictions(tmp_path / "p.csv", FrameTrack(np.array([1.0, 0.0, 1.0]), np.array([0.4, 0.5, 0.6])))
    assert main(["eval", "--pred", str(tmp_path / "p.csv"), "--gt", str(tmp_path / "gt.csv"),
                 "--tol-deg", "2"]) == 0
    assert "F1@2deg=1.000" in capsys.readouterr().out


def test_eval_length_mismatch(tmp_path, capsys):
    write_labels(tmp_path / "gt.csv", GroundTruth(np.array([True, True]), np.array([0.4, 0.6])))
    write_predictions(tmp_path / "p.csv", FrameTrack(np.array([1.0]), np.array([0.4])))
    assert main(["eval", "--pred", str(tmp_path / "p.csv"), "--gt", str(tmp_path / "gt.csv")]) != 0
    assert "frames" in capsys.readouterr().err


def test_eval_schema_error(tmp_path):
    (tmp_path / "p.csv").write_text("a,b\n")
    write_labels(tmp_path / "gt.csv", GroundTruth(np.array([True]), np.array([0.4])))
    assert main(["eval", "--pred", str(tmp_path / "p.csv"), "--gt", str(tmp_path / "gt.csv")]) != 0


BENCH = ["bench", "--feats", "gcc-ref,salsa-lite", "--mics-grid", "2,4,8,16", "--snrs", "20",
         "--seeds", "0", "--scenes", "1"]


@pytest.fixture(scope="module")
def bench_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench") / "b.csv"
    assert main(BENCH + ["--out", str(out)]) == 0
    return out


def test_bench_rows_and_apertures(bench_csv):
    rows = list(csv.DictReader(bench_csv.open()))
    assert len(rows) == 8
    assert {(r["feature"], r["mics"]) for r in rows} == {(f, m) for f in ("gcc-ref", "salsa-lite")
                                                         for m in ("2", "4", "8", "16")}
    aperture = {r["mics"]: r["aperture_h"] for r in rows}
    assert aperture["4"] == "0.177" and aperture["8"] == "0.290" and aperture["16"] == "0.450"
    for r in rows:
        assert 0 <= float(r["f1"]) <= 1 and 0 <= float(r["det_err"]) <= 1


def test_bench_is_deterministic(tmp_path, bench_csv):
    out = tmp_path / "b2.csv"
    main(BENCH + ["--out", str(out)])
    assert out.read_bytes() == bench_csv.read_bytes()


def test_bench_unknown_feature(tmp_path):
    assert main(["bench", "--feats", "mfcc", "--out", str(tmp_path / "b.csv")]) != 0
    assert not list(tmp_path.iterdir())


def test_sidecar_argv_reproduces_artifact(tmp_path, sim16):
    out = tmp_path / "f.aft"
    main(["extract", str(sim16.with_name("s.wav")), "--feat", "gcc", "--mode", "ref", "--out", str(out)])
    first = out.read_bytes()
    shutil.move(out, tmp_path / "first.aft")
    argv = json.loads(parse_meta(sidecar_path(out).read_text())["run.argv"])
    assert main(argv) == 0
    assert out.read_bytes() == first


def test_speed_of_sound_override(tmp_path, sim16, monkeypatch):
    monkeypatch.setenv("ARRAYFEAT_C", "340")
    out = tmp_path / "f.aft"
    main(["extract", str(sim16.with_name("s.wav")), "--feat", "salsa-lite", "--out", str(out)])
    assert parse_meta(sidecar_path(out).read_text())["run.c"] == "340.0"


def test_entry_point_runs():
    res = subprocess.run([sys.executable, "-m", "arrayfeat.cli", "geometry"], capture_output=True, text=True)
    assert res.returncode == 0 and "lag bins needed=61" in res.stdout
