import subprocess
import sys

import pytest

from orthokd.cli import main
from orthokd.io import read_features

TINY = """\
epochs = 2
teacher_epochs = 2
n_train = 128
n_test = 64
d_t = 16
d_s = 4
teacher_hidden = 16
student_hidden = 8
"""


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return path


def test_train_teacher_then_distill(tmp_path, cfg_path, capsys):
    t = tmp_path / "t"
    assert main(["train-teacher", "--config", str(cfg_path), "--out", str(t)]) == 0
    assert (t / "teacher.npz").exists() and (t / "teacher_metrics.csv").exists()
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = main(["distill", "--config", str(cfg_path), "--teacher", str(t / "teacher.npz"),
                     "--out", str(out), "--set", "normalizer=whiten"])
        assert code == 0
        runs.append((out / "metrics.csv").read_bytes())
        assert (out / "diversity.csv").read_text().startswith("loss,bound,const,lambda,holds,form\n")
    assert runs[0] == runs[1]
    assert "student test accuracy" in capsys.readouterr().out


def test_beta_zero_matches_plain(tmp_path, cfg_path):
    assert main(["distill", "--config", str(cfg_path), "--out", str(tmp_path / "z"),
                 "--set", "beta=0"]) == 0
    assert main(["distill", "--config", str(cfg_path), "--out", str(tmp_path / "p"), "--plain"]) == 0
    assert (tmp_path / "z" / "metrics.csv").read_bytes() == (tmp_path / "p" / "metrics.csv").read_bytes()


def test_config_errors_exit_1(tmp_path, cfg_path, capsys):
    assert main(["distill", "--config", str(cfg_path), "--set", "bogus=1"]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("epochs = 1\nlr = -1\n")
    assert main(["distill", "--config", str(bad), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "unknown key 'bogus'" in err and "line 2" in err
    assert main(["distill", "--config", str(tmp_path / "missing.cfg")]) == 1


def test_numeric_error_exit_2(tmp_path, cfg_path, capsys):
    code = main(["distill", "--config", str(cfg_path), "--out", str(tmp_path / "n"),
                 "--set", "lr=1e30", "--set", "optimizer=sgd_momentum"])
    assert code == 2
    assert "step" in capsys.readouterr().err


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["bench", "--d-s", "x"])
    assert info.value.code == 1


def test_bench_iters_too_small(capsys):
    assert main(["bench", "--iters", "3"]) == 1


def test_bench_writes_table(tmp_path, capsys):
    assert main(["bench", "--d-s", "4", "--d-t", "8,16", "--batch", "8", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "kind,d_s,d_t,batch,median_ms,flops,ratio_to_linear"
    assert len(out) == 1 + 2 * 6
    assert (tmp_path / "bench.csv").read_text().splitlines() == out


def test_check_passes(capsys):
    assert main(["check"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS ") for line in lines)


def test_dump_features(tmp_path, cfg_path):
    assert main(["dump-features", "--config", str(cfg_path), "--out", str(tmp_path)]) == 0
    z, y = read_features(tmp_path / "train_features.vkdf")
    assert z.shape == (128, 16) and y.shape == (128,)
    assert main(["dump-features", "--inputs", "--config", str(cfg_path), "--out", str(tmp_path / "raw")]) == 0
    z, _ = read_features(tmp_path / "raw" / "test_features.vkdf")
    assert z.shape == (64, 32)


def test_sweep(tmp_path, cfg_path):
    code = main(["sweep", "--config", str(cfg_path), "--out", str(tmp_path),
                 "--projectors", "orthogonal,svd_target", "--normalizers", "none,whiten",
                 "--set", "epochs=1"])
    assert code == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("projector,normalizer,seed,epoch,")
    assert len(lines) == 1 + 4 * 2


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "orthokd.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "dump-features" in res.stdout
