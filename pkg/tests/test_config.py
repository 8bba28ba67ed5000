import pytest

from kmpc_acdc.config import ConfigError, RunConfig, load_config, parse_assignments


def test_defaults_match_reference_setup():
    c = RunConfig()
    assert (c.L, c.C, c.G, c.P, c.r, c.V_d) == (1e-3, 4560e-6, 0.01, 25.0, 0.08, 48.0)
    assert (c.t_start, c.t_end, c.duration, c.P_high) == (0.034, 0.054, 0.12, 100.0)
    assert c.K == 400 and c.horizon == 3


def test_file_and_overrides(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# comment\nmode = switched\nK = 10   # inline\naffine = false\nP = 30\n")
    c = load_config(path, {"K": 20})
    assert c.mode == "switched" and c.K == 20 and c.affine is False and c.P == 30.0


def test_roundtrip(tmp_path):
    c = RunConfig(seed=7, r_mismatch=0.5, controller="pi_pr")
    path = tmp_path / "c.txt"
    path.write_text(c.dumps())
    assert load_config(path) == c


@pytest.mark.parametrize("text", ["nokey\n", "bogus = 1\n", "K = ten\n", "affine = maybe\n",
                                  "mode = sideways\n", "t_start = 0.2\n"])
def test_malformed(tmp_path, text):
    path = tmp_path / "c.txt"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_parse_assignments():
    assert parse_assignments(["K=5", "ridge = 0"]) == {"K": 5, "ridge": 0.0}
    with pytest.raises(ConfigError):
        parse_assignments(["K"])


def test_mismatch_only_on_controller_side():
    c = RunConfig(r_mismatch=0.5)
    assert c.params().r == 0.08
    assert c.controller_params().r == pytest.approx(0.12)
