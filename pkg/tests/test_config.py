import pytest

from s2r_depth.config import TrainConfig, format_config, load_config, parse_config, toy_config
from s2r_depth.errors import InvalidConfigError


def test_defaults():
    cfg = TrainConfig()
    assert (cfg.base_lr, cfg.lr_decay, cfg.lr_step, cfg.epochs) == (1e-4, 0.5, 10, 60)
    assert (cfg.adam_beta1, cfg.adam_beta2, cfg.weight_decay) == (0.9, 0.999, 1e-4)
    assert (cfg.loss.lam, cfg.loss.beta) == (1.0, 0.001)
    assert (cfg.stage1.lambda1, cfg.stage1.lambda2, cfg.stage1.lambda3) == (10, 1, 1)
    assert cfg.model.style_dim == 8 and cfg.model.ste_dim * 4 == 256


@pytest.mark.parametrize("cfg", [TrainConfig(), toy_config(seed=3, combine="concat")])
def test_format_parse_round_trip(cfg):
    assert parse_config(format_config(cfg)) == cfg


def test_lambda_alias_and_comments():
    cfg = parse_config("# comment\nloss.lambda = 0.5   # trailing\nepochs = 3\n"
                       "data.target_resolution = 32, 64\nstage1.flip_only = false\n")
    assert cfg.loss.lam == 0.5 and cfg.epochs == 3
    assert cfg.data.target_resolution == (32, 64) and cfg.stage1.flip_only is False
    assert "loss.lambda = 0.5" in format_config(cfg)


@pytest.mark.parametrize("text", ["bogus = 1", "loss.bogus = 1", "nope.lam = 1", "epochs = three",
                                  "epochs = 0", "combine = max", "no equals sign", "stage = 7",
                                  "data.target_resolution = 32", "loss.beta = -1"])
def test_bad_configs(text):
    with pytest.raises(InvalidConfigError):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(InvalidConfigError):
        load_config(tmp_path / "absent.cfg")


def test_fingerprint_tracks_content():
    assert TrainConfig().fingerprint() == TrainConfig().fingerprint()
    assert TrainConfig().fingerprint() != TrainConfig(seed=1).fingerprint()
