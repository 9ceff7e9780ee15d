import csv
import json

import numpy as np
import pytest

from ganprint.cli import main
from ganprint.imaging import load_dataset
from ganprint.toynet import default_generator, load_model


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "d"
    assert main(["synth", "--n", "24", "--size", "32", "--seed", "7", "--out", str(d)]) == 0
    return d


def test_synth_count_and_determinism(tmp_path, capsys, data_dir):
    assert len(json.loads((data_dir / "manifest.json").read_text())) == 24
    assert len(list(data_dir.glob("*.png"))) == 24
    again = tmp_path / "again"
    run(capsys, "synth", "--n", 24, "--size", 32, "--seed", 7, "--out", again)
    assert (again / "manifest.json").read_bytes() == (data_dir / "manifest.json").read_bytes()


def test_usage_errors_exit_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--n", "0", "--out", str(tmp_path)])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_runtime_error_exit_1(tmp_path, capsys):
    code, out = run(capsys, "train", "--data", tmp_path / "missing", "--out", tmp_path / "m.gpnt")
    assert code == 1 and "error" in out.err


def test_env_seed_default(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("GANPRINT_SEED", "7")
    run(capsys, "synth", "--n", 2, "--size", 16, "--out", tmp_path / "a")
    monkeypatch.delenv("GANPRINT_SEED")
    run(capsys, "synth", "--n", 2, "--size", 16, "--seed", 7, "--out", tmp_path / "b")
    assert np.array_equal(load_dataset(tmp_path / "a").images, load_dataset(tmp_path / "b").images)


def test_train_zero_epochs_is_seeded_init(tmp_path, capsys, data_dir):
    m = tmp_path / "m.gpnt"
    code, _ = run(capsys, "train", "--data", data_dir, "--epochs", 0, "--seed", 4, "--out", m,
                  "--loss-csv", tmp_path / "loss.csv")
    assert code == 0 and m.read_bytes()[:4] == b"GPNT"
    net, init = load_model(m), default_generator(4)
    for a, b in zip(net.layers, init.layers):
        for k in a.params:
            assert np.array_equal(a.params[k], b.params[k])
    assert (tmp_path / "loss.csv").read_text().startswith("epoch,loss\n0,")


def test_trigger_training_then_verify(tmp_path, capsys):
    t, w, m, m0 = (tmp_path / n for n in ("t.png", "w.png", "m.gpnt", "m0.gpnt"))
    data_dir = tmp_path / "d"
    run(capsys, "synth", "--n", 64, "--size", 32, "--seed", 1, "--out", data_dir)
    run(capsys, "trigger", "--size", 32, "--trigger", t, "--target", w)
    run(capsys, "train", "--data", data_dir, "--lambda", 1.0, "--trigger", t, "--target", w, "--out", m)
    code, out = run(capsys, "verify-trigger", "--model", m, "--trigger", t, "--target", w)
    assert code == 0 and "WATERMARK PRESENT" in out.out
    run(capsys, "train", "--data", data_dir, "--out", m0)
    _, out = run(capsys, "verify-trigger", "--model", m0, "--trigger", t, "--target", w)
    assert "WATERMARK ABSENT" in out.out


def test_attack_reports(tmp_path, capsys, data_dir):
    m = tmp_path / "m.gpnt"
    run(capsys, "train", "--data", data_dir, "--epochs", 5, "--out", m)
    r0 = tmp_path / "zero.csv"
    assert run(capsys, "attack", "--model", m, "--data", data_dir, "--epsilon", 0, "--report", r0)[0] == 0
    rows = list(csv.DictReader(r0.open()))
    assert rows[0]["L1"] == rows[0]["L2"] == "0.0000"
    r = tmp_path / "r.csv"
    run(capsys, "attack", "--model", m, "--data", data_dir, "--iters", 5, "--baseline", "random", "--report", r)
    rows = list(csv.DictReader(r.open()))
    assert list(rows[0]) == ["Model", "Dataset", "Method", "L1", "L2", "FD32"]
    pgd, noise = (float(x["L2"]) for x in rows)
    assert pgd > noise
    md = tmp_path / "r.md"
    run(capsys, "attack", "--model", m, "--data", data_dir, "--iters", 1, "--markdown", "--report", md)
    assert md.read_text().startswith("| Model | Dataset |")


def test_watermark_embed_decode(tmp_path, capsys):
    d, dw = tmp_path / "d", tmp_path / "dw"
    run(capsys, "synth", "--n", 5, "--size", 64, "--out", d)
    code = "0123456789abcdef"
    assert run(capsys, "watermark", "embed", "--code", code, "--key", 42, "--data", d, "--out", dw)[0] == 0
    _, out = run(capsys, "watermark", "decode", "--code", code, "--key", 42, "--data", dw)
    assert "bit accuracy 1.0000" in out.out
    report = tmp_path / "wrong.csv"
    run(capsys, "watermark", "decode", "--code", code, "--key", 43, "--data", dw, "--report", report)
    acc = float(next(csv.DictReader(report.open()))["bit_accuracy"])
    assert 0.3 <= acc <= 0.7


def test_sweep_rows(tmp_path, capsys):
    r = tmp_path / "s.csv"
    code, _ = run(capsys, "sweep", "--n", 4, "--heldout", 2, "--epochs", 50, "--checkpoint-every", 5,
                  "--report", r)
    assert code == 0
    rows = list(csv.DictReader(r.open()))
    assert [int(x["epoch"]) for x in rows] == list(range(0, 51, 5))


def test_attribute_commands(tmp_path, capsys):
    code, out = run(capsys, "attribute", "check-paper-tables")
    assert code == 0 and out.out.strip().endswith("PASS")
    files = []
    for k in range(2):
        c, conf = tmp_path / f"c{k}.gpcl", tmp_path / f"conf{k}.csv"
        assert run(capsys, "attribute", "train", "--n-per-class", 20, "--size", 32, "--seed", 1,
                   "--out", c, "--confusion", conf)[0] == 0
        files.append((c.read_bytes(), conf.read_text()))
    assert files[0] == files[1]
    assert files[0][1].splitlines()[-1].startswith("precision,")
    fam = tmp_path / "fam"
    run(capsys, "synth", "--families", "--n", 5, "--size", 32, "--seed", 9, "--out", fam)
    code, out = run(capsys, "attribute", "eval", "--classifier", tmp_path / "c0.gpcl", "--data", fam)
    assert code == 0 and "on 20 images" in out.out
