import numpy as np
import pytest

from cropgcn.cli import _train_config, build_parser, main
from cropgcn.io_formats import read_label, read_tensor, write_label
from cropgcn.model import DEFAULT_DIMS, GcnModel, save_model
from cropgcn.training import TrainConfig

SYNTH = ["--height", "12", "--width", "12", "--times", "2", "--bands", "4", "--parcel-size", "8,30"]
TRAIN = ["--k", "6", "--hidden", "5,3", "--patch-size", "6", "--max-epochs", "2", "--batch-size", "4"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("scenes")
    assert main(["synth", "--scenes", "3", "--seed", "7", "--out", str(d), *SYNTH]) == 0
    return d


@pytest.fixture(scope="module")
def trained(data_dir, tmp_path_factory):
    model = tmp_path_factory.mktemp("model") / "m.gcm"
    assert main(["train", "--data", str(data_dir), "--out", str(model), *TRAIN]) == 0
    return model


def test_synth_writes_pairs_reproducibly(data_dir, tmp_path):
    assert sorted(p.name for p in data_dir.iterdir()) == [
        f"scene_00{i}.{ext}" for i in range(3) for ext in ("msk", "scs")
    ]
    again = tmp_path / "again"
    assert main(["synth", "--scenes", "3", "--seed", "7", "--out", str(again), *SYNTH]) == 0
    for p in data_dir.iterdir():
        assert (again / p.name).read_bytes() == p.read_bytes()


def test_synth_invalid_value_writes_nothing(tmp_path, capsys):
    out = tmp_path / "never"
    assert main(["synth", "--out", str(out), "--noise", "-1"]) != 0
    assert not out.exists()
    assert "error" in capsys.readouterr().err


def test_train_defaults_match_config():
    args = build_parser().parse_args(["train", "--data", "d", "--out", "m"])
    assert _train_config(args) == TrainConfig()


def test_train_writes_model_and_reproducible_log(data_dir, trained, tmp_path):
    log = trained.with_suffix(".csv").read_text()
    assert log.splitlines()[0] == "epoch,train_bce,val_bce,val_mcc,seconds"
    assert all(line.endswith(",") for line in log.splitlines()[1:])
    other = tmp_path / "m.gcm"
    assert main(["--threads", "1", "train", "--data", str(data_dir), "--out", str(other), *TRAIN]) == 0
    assert other.read_bytes() == trained.read_bytes()
    assert other.with_suffix(".csv").read_text() == log


def test_train_timing_fills_seconds(data_dir, tmp_path):
    out = tmp_path / "t.gcm"
    assert main(["train", "--data", str(data_dir), "--out", str(out), "--timing", *TRAIN]) == 0
    assert all(not line.endswith(",") for line in out.with_suffix(".csv").read_text().splitlines()[1:])


def test_train_other_patch_size(data_dir, tmp_path):
    out = tmp_path / "p.gcm"
    assert main(["train", "--data", str(data_dir), "--out", str(out), *TRAIN, "--patch-size", "20"]) == 0
    assert out.is_file()


def test_train_missing_data_dir(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "m.gcm")]) != 0
    assert "does not exist" in capsys.readouterr().err
    assert not (tmp_path / "m.gcm").exists()


def test_train_invalid_flag_rejected_before_reading(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "m"), "--lr", "0"]) != 0
    assert "learning_rate" in capsys.readouterr().err


def test_config_file_and_flag_precedence(data_dir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        f"# experiment\ndata = {data_dir}\nout = {tmp_path / 'c.gcm'}\nk = 6\nhidden = 5,3\n"
        "patch-size = 6\nmax_epochs = 5\n"
    )
    assert main(["--config", str(cfg), "train", "--max-epochs", "1"]) == 0
    assert len((tmp_path / "c.csv").read_text().splitlines()) == 2
    cfg.write_text("bogus = 1\n")
    assert main(["--config", str(cfg), "train", "--data", "d", "--out", "m"]) != 0


def test_bad_thread_env(monkeypatch, trained, capsys):
    monkeypatch.setenv("GCN_THREADS", "zero")
    assert main(["inspect", "--model", str(trained)]) != 0
    assert "GCN_THREADS" in capsys.readouterr().err


def test_infer_deterministic_and_binary(data_dir, trained, tmp_path):
    outs = []
    for name in ("a.msk", "b.msk"):
        path = tmp_path / name
        assert main(["infer", "--model", str(trained), "--scene", str(data_dir / "scene_000.scs"), "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    pred = read_label(tmp_path / "a.msk")
    assert pred.shape == (48, 48) and set(np.unique(pred).tolist()) <= {0, 1}


def test_infer_k_mismatch(data_dir, tmp_path, capsys):
    model = tmp_path / "big.gcm"
    save_model(GcnModel.zeros(DEFAULT_DIMS), model)
    assert main(["infer", "--model", str(model), "--scene", str(data_dir / "scene_000.scs"), "--out", str(tmp_path / "o")]) != 0
    err = capsys.readouterr().err
    assert "k=80" in err and "T*B=2*4=8" in err
    assert not (tmp_path / "o").exists()


def test_eval_reports(data_dir, tmp_path, capsys):
    gt = data_dir / "scene_000.msk"
    truth = read_label(gt)
    pred = tmp_path / "pred.msk"
    write_label(pred, np.where(truth == 255, 0, truth).astype(np.uint8))
    csv_path = tmp_path / "r.csv"
    assert main(["eval", "--pred", str(pred), "--gt", str(gt), "--csv", str(csv_path)]) == 0
    rows = csv_path.read_text().splitlines()
    assert rows[1].split(",")[1:] == ["1.0"] * 6

    wrong = np.where(truth == 1, 0, 1).astype(np.uint8)
    wrong[20:, :] = np.where(truth[20:] == 1, 1, 0)
    write_label(pred, wrong)
    excl = np.zeros_like(truth)
    excl[:20] = 1
    write_label(tmp_path / "x.msk", excl)
    assert main(["eval", "--pred", str(pred), "--gt", str(gt), "--exclusion", str(tmp_path / "x.msk"), "--csv", str(csv_path)]) == 0
    row = dict(zip(*(line.split(",") for line in csv_path.read_text().splitlines()[:2])))
    assert float(row["mcc_mask"]) == 1.0 and float(row["mcc_full"]) < 1.0
    assert "mean" in capsys.readouterr().out


def test_eval_shape_mismatch(tmp_path, capsys):
    write_label(tmp_path / "a.msk", np.zeros((4, 4), dtype=np.uint8))
    write_label(tmp_path / "b.msk", np.zeros((4, 5), dtype=np.uint8))
    assert main(["eval", "--pred", str(tmp_path / "a.msk"), "--gt", str(tmp_path / "b.msk")]) != 0
    assert "4x4" in capsys.readouterr().err


def test_inspect_default_model(tmp_path, capsys):
    path = tmp_path / "default.gcm"
    save_model(GcnModel.init(DEFAULT_DIMS), path)
    assert main(["inspect", "--model", str(path)]) == 0
    out = capsys.readouterr().out
    assert "params: 7937" in out
    assert "bytes: 31780 (format: 31780)" in out
    assert "80 -> 64 -> 32 -> 16 -> 8 -> 1" in out


def test_inspect_empty_file(tmp_path, capsys):
    (tmp_path / "empty.gcm").write_bytes(b"")
    assert main(["inspect", "--model", str(tmp_path / "empty.gcm")]) != 0
    assert "too short" in capsys.readouterr().err


def test_features(data_dir, tmp_path):
    out = tmp_path / "f.tns"
    assert main(["features", "--scene", str(data_dir / "scene_001.scs"), "--out", str(out)]) == 0
    assert read_tensor(out).shape == (12, 12, 32)
    assert main(["features", "--scene", str(data_dir / "scene_001.scs"), "--out", str(out), "--window", "4"]) != 0


def test_graph_dump(capsys):
    assert main(["graph-dump", "--height", "1", "--width", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines == ["0 0 0.5", "0 1 0.5", "1 0 0.5", "1 1 0.5"]
    assert main(["graph-dump", "--height", "3", "--width", "3", "--connectivity", "four"]) == 0
    triples = [line.split() for line in capsys.readouterr().out.splitlines()]
    assert len(triples) == 9 + 2 * 12
    assert main(["graph-dump", "--height", "0", "--width", "3"]) != 0
