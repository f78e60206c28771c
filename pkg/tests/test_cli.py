import json

import pytest

from s2r_depth.cli import build_parser, main, toyworld_main
from s2r_depth.config import format_config, toy_config
from s2r_depth.data import read_dataset


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "train" in capsys.readouterr().out


@pytest.mark.parametrize("sub,flags", [
    ("train", ["--stage", "--config", "--resume", "--out", "--seed"]),
    ("eval", ["--ckpt", "--data", "--cap", "--scaling", "--out"]),
    ("visualize", ["--ckpt", "--image", "--out"]),
])
def test_subcommand_help_documents_flags(sub, flags, capsys):
    assert main([sub, "--help"]) == 0
    text = capsys.readouterr().out
    assert all(f in text for f in flags)


def test_toyworld_help(capsys):
    assert toyworld_main(["generate", "--help"]) == 0
    text = capsys.readouterr().out
    assert all(f in text for f in ["--count", "--out", "--domain", "--seed", "--resolution", "--max-depth"])
    assert main(["toyworld", "generate", "--help"]) == 0


def test_unknown_subcommand_and_flag(capsys):
    assert main(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err
    assert main(["eval", "--ckpt", "x", "--data", "y", "--bogus"]) == 2
    assert main([]) == 2


def test_generate(tmp_path, capsys):
    assert toyworld_main(["generate", "--count", "3", "--out", str(tmp_path / "d"), "--domain", "B"]) == 0
    samples = read_dataset(tmp_path / "d")
    assert len(samples) == 3 and samples[0].image.shape == (32, 64, 3)


def test_bad_config_exits_two(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("loss.nonsense = 1\n")
    assert main(["train", "--stage", "1", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_missing_resume_exits_two(tmp_path):
    toyworld_main(["generate", "--count", "2", "--out", str(tmp_path / "d")])
    cfg = tmp_path / "c.cfg"
    cfg.write_text(format_config(toy_config(**{"paths.source": str(tmp_path / "d")})))
    assert main(["train", "--stage", "2", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_runtime_errors_exit_three(tmp_path):
    assert main(["eval", "--ckpt", str(tmp_path / "missing.safetensors"), "--data", str(tmp_path)]) == 3
    assert main(["visualize", "--ckpt", str(tmp_path / "missing"), "--image", "x.png", "--out", "o"]) == 3


def test_parser_lists_all_subcommands():
    text = build_parser().format_help()
    assert all(s in text for s in ("train", "eval", "visualize", "toyworld"))
