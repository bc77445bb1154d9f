import pytest

from ecap.config import ConfigError, RunConfig, parse_config, read_config_text


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.cfg"
    p.write_text("")
    cfg = parse_config(p, overrides={"output_dir": "out"})
    assert cfg == RunConfig(output_dir="out")
    assert cfg.n0 == 1.0 and cfg.beta == 0.8 and cfg.iterations == 3000


def test_out_of_range_names_key_and_range(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("beta = 1.5\n")
    with pytest.raises(ConfigError, match=r"beta.*\(0, 1\)"):
        parse_config(p)


def test_override_beats_file(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text("n0 = 1.0  # full strength\nseed = 7\n")
    cfg = parse_config(p, overrides={"n0": "0.53"})
    assert cfg.n0 == 0.53 and cfg.seed == 7
    assert parse_config(p, overrides={"n0": "0.053"}).n0 == 0.053


@pytest.mark.parametrize("text,key", [
    ("nzero = 1\n", "nzero"),
    ("iterations = many\n", "iterations"),
    ("variant = \n", "variant"),
    ("transforms = maybe\n", "transforms"),
    ("disabled_classes = 0,9\n", "disabled_classes"),
])
def test_bad_values_name_the_key(tmp_path, text, key):
    p = tmp_path / "c.cfg"
    p.write_text(text)
    with pytest.raises(ConfigError, match=key):
        parse_config(p)


def test_line_without_equals_rejected():
    with pytest.raises(ConfigError, match="line 2"):
        read_config_text("seed = 1\nbeta 0.5\n")


def test_round_trip(tmp_path):
    cfg = RunConfig(n0=0.53, beta=0.9, transforms=False, disabled_classes=(0, 2),
                    output_dir=str(tmp_path), gamma=1e-3)
    p = tmp_path / "rt.cfg"
    p.write_text(cfg.to_text())
    assert parse_config(p) == cfg


def test_output_root_env(monkeypatch, tmp_path):
    monkeypatch.setenv("ECAP_OUTPUT_ROOT", str(tmp_path))
    assert RunConfig().output_dir == str(tmp_path / "run")
