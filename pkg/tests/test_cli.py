import pytest

from kmpc_acdc.cli import main


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["train", "--seed", "1", "--set", "K=60", "--out", str(d / "train")]) == 0
    assert main(["fit", str(d / "train"), "--out", str(d / "m.txt")]) == 0
    return d


def test_train_fit_run(pipeline):
    d = pipeline
    assert main(["run", "--controller", "kmpc", "--model", str(d / "m.txt"), "--out", str(d / "run")]) == 0
    assert (d / "run" / "metrics.csv").exists()
    assert (d / "run" / "waveforms.csv").read_text().splitlines()[0] == "t,i,v,v_ac,mu,P"
    assert main(["metrics", str(d / "run")]) == 0


def test_validate_emits_comparison(pipeline):
    d = pipeline
    assert main(["validate", "--model", str(d / "m.txt"), "--seed", "2", "--out", str(d / "val")]) == 0
    assert len((d / "val" / "validation.csv").read_text().splitlines()) == 5
    assert "test_seed = 2\n" in (d / "val" / "config.txt").read_text()


def test_pi_pr_needs_no_model(tmp_path):
    assert main(["run", "--controller", "pi_pr", "--out", str(tmp_path)]) == 0


def test_kmpc_without_model_is_usage_error(tmp_path, capsys):
    assert main(["run", "--controller", "kmpc", "--out", str(tmp_path)]) == 2
    assert "needs --model" in capsys.readouterr().err


def test_unknown_flag(tmp_path):
    assert main(["run", "--frobnicate", "--out", str(tmp_path)]) == 2


def test_malformed_config(tmp_path):
    cfg = tmp_path / "bad.txt"
    cfg.write_text("K = lots\n")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_missing_model_file_is_runtime_error(tmp_path):
    assert main(["run", "--controller", "kmpc", "--model", str(tmp_path / "nope.txt"),
                 "--out", str(tmp_path / "o")]) == 1


def test_sweep(tmp_path):
    assert main(["sweep", "--grid", "controller=ida_pbc,pi_pr", "--grid", "r_mismatch=0,0.5",
                 "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert len(lines) == 5


def test_plots_written(pipeline, tmp_path):
    assert main(["run", "--controller", "pi_pr", "--plots", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "waveforms.svg").exists() and (tmp_path / "lifted.svg").exists()
