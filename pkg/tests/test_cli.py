import numpy as np
import pytest

from penabc import cli, io
from penabc.config import (
    ConfigError,
    ExperimentConfig,
    Method,
    MethodSpec,
    check_pairing,
    from_mapping,
    load_config,
    preset,
    to_toml,
)
from penabc.models import ModelId

SMALL = """
model = "ar2"
method = "mlp-small"
n_train = 300
n_eval = 100
n_tilde = 2000
percentile_x = 1.0
repetitions = 2
epochs = 2
posterior_draws = 20
grid_step = 0.05
seed = 11
"""


def test_method_parsing():
    assert MethodSpec.parse("PEN-2") == MethodSpec(Method.PEN, 2)
    assert MethodSpec.parse("pen") == MethodSpec(Method.PEN, 0)
    assert MethodSpec.parse("mlp_pre").method is Method.MLP_PRE
    assert MethodSpec.parse("pen-10").label == "pen-10"
    assert not MethodSpec.parse("handpicked").learned
    for bad in ("pen-x", "pen--1", "lstm"):
        with pytest.raises(ConfigError):
            MethodSpec.parse(bad)


def test_pairing_rules():
    with pytest.raises(ConfigError, match="mlp-pre"):
        check_pairing("ar2", MethodSpec.parse("mlp-pre"))
    with pytest.raises(ConfigError, match="PEN-0"):
        check_pairing("gandk", MethodSpec.parse("pen-2"))
    with pytest.raises(ConfigError, match="smaller"):
        check_pairing("ar2", MethodSpec.parse("pen-100"), 100)
    check_pairing("alpha", MethodSpec.parse("mlp-pre"))
    check_pairing("ma2", MethodSpec.parse("pen-10"), 100)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(ModelId.AR2, n_tilde=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(ModelId.AR2, percentile_x=100.0)
    with pytest.raises(ConfigError):
        ExperimentConfig(ModelId.AR2, reference="exact")
    with pytest.raises(ConfigError, match="unknown config keys"):
        from_mapping({"model": "ar2", "lr": 0.1})
    with pytest.raises(ConfigError, match="integer"):
        from_mapping({"model": "ar2", "epochs": 2.5})
    with pytest.raises(ConfigError, match="only meaningful"):
        from_mapping({"model": "ar2", "method": "mlp-small", "d": 2})
    assert from_mapping({"model": "ar2", "method": "pen", "d": 2}).method == MethodSpec(Method.PEN, 2)


def test_presets_and_toml_round_trip(tmp_path):
    for fig, model in [("fig1", ModelId.GANDK), ("table1", ModelId.ALPHA_STABLE),
                       ("fig3", ModelId.AR2), ("fig4", ModelId.MA2)]:
        for scale in ("desk", "paper"):
            cfg = preset(fig, scale)
            assert cfg.model is model and len(cfg.methods) == 5
            path = tmp_path / f"{fig}-{scale}.toml"
            path.write_text(to_toml(cfg))
            assert load_config(path) == cfg
    assert preset("fig3", "paper").percentile_x == 0.02
    with pytest.raises(ConfigError):
        preset("fig9")


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("model = \n")
    with pytest.raises(ConfigError):
        load_config(bad)


def _write(tmp_path, text):
    path = tmp_path / "exp.toml"
    path.write_text(text + f'output_dir = "{tmp_path / "out"}"\n')
    return str(path)


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["simulate"]) == cli.EXIT_CONFIG
    bad = _write(tmp_path, SMALL.replace('"mlp-small"', '"mlp-pre"'))
    assert cli.main(["simulate", "--config", bad]) == cli.EXIT_CONFIG
    assert "mlp-pre" in capsys.readouterr().err
    good = _write(tmp_path, SMALL)
    # abc before simulate: missing inputs are a runtime failure
    assert cli.main(["abc", "--config", good, "--method", "handpicked"]) == cli.EXIT_RUNTIME
    assert cli.main(["train", "--config", good, "--method", "handpicked"]) == cli.EXIT_CONFIG
    assert cli.main(["simulate", "--config", good, "--threads", "0"]) == cli.EXIT_CONFIG


def test_stagewise_run(tmp_path):
    cfg_path = _write(tmp_path, SMALL)
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", cfg_path]) == 0
    assert io.read_series_binary(out / "observed.bin").shape == (2, 100)
    assert io.read_series_binary(out / "table_series.bin").shape == (2000, 100)
    stamp = (out / "simulate.stamp").read_text()
    assert cli.main(["simulate", "--config", cfg_path]) == 0
    assert (out / "simulate.stamp").read_text() == stamp

    assert cli.main(["train", "--config", cfg_path]) == 0
    spec, _ = io.load_weights(out / "weights-mlp-small-n300.bin")
    assert spec.in_dim == 100
    assert cli.main(["abc", "--config", cfg_path]) == 0
    assert cli.main(["abc", "--config", cfg_path, "--method", "handpicked"]) == 0
    header, post = io.read_matrix_csv(out / "posterior-handpicked-n0-rep1.csv")
    assert header == ["theta_1", "theta_2", "distance"] and post.shape == (20, 3)
    assert np.all(np.diff(post[:, 2]) >= 0)

    assert cli.main(["evaluate", "--config", cfg_path]) == 0
    assert cli.main(["evaluate", "--config", cfg_path, "--method", "handpicked"]) == 0
    text = (out / "metrics-handpicked-n0.csv").read_text().splitlines()
    assert len(text) == 3 and "wasserstein" in text[0] + text[1]
