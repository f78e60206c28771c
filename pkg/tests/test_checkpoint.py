import torch

from s2r_depth.checkpoint import Checkpoint, hash_tensors, module_hash
from s2r_depth.config import config_from_dict, toy_config
from s2r_depth.model import S2RDepthNet, load_model
from s2r_depth.training import make_checkpoint, set_trainable


def small_model():
    torch.manual_seed(0)
    return S2RDepthNet(toy_config().model, stage=2)


def test_round_trip_is_byte_identical(tmp_path):
    model = small_model()
    ckpt = make_checkpoint(model, toy_config(), 2, 0)
    first = ckpt.save(tmp_path / "a.safetensors").read_bytes()
    second = Checkpoint.load(tmp_path / "a.safetensors").save(tmp_path / "b.safetensors").read_bytes()
    assert first == second
    assert make_checkpoint(model, toy_config(), 2, 0).to_bytes() == first


def test_metadata_round_trip():
    cfg = toy_config(seed=5, **{"loss.lam": 0.5})
    ckpt = Checkpoint.from_bytes(make_checkpoint(small_model(), cfg, 2, 3).to_bytes())
    assert ckpt.stage == 2 and ckpt.metadata["epoch"] == 3
    assert config_from_dict(ckpt.metadata["config"]) == cfg
    assert ckpt.frozen == ["ste.encoder", "ste.decoder_ds"]


def test_reload_gives_same_predictions():
    model = small_model().eval()
    x = torch.rand(1, 3, 32, 64) * 2 - 1
    reloaded = load_model(Checkpoint.from_bytes(make_checkpoint(model, toy_config(), 2, 0).to_bytes()))
    with torch.no_grad():
        torch.testing.assert_close(model.predict(x), reloaded.predict(x))


def test_optimizer_state_only_for_trainable():
    model = small_model()
    set_trainable(model, ["dp"])
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=1e-3)
    model.predict(torch.rand(1, 3, 32, 32)).mean().backward()
    opt.step()
    ckpt = make_checkpoint(model, toy_config(), 2, 0, optimizers=(opt,))
    names = ckpt.optimizer_state()
    assert names and all(k.startswith("optim.dp.") for k in names)
    assert len(names) == 2 * len(params)
    assert set(ckpt.metadata["optimizer_steps"].values()) == {1}


def test_hash_prefixes():
    model = small_model()
    full = module_hash(model)
    enc = module_hash(model, ["ste.encoder"])
    with torch.no_grad():
        next(model.dp.parameters()).add_(1)
    assert module_hash(model, ["ste.encoder"]) == enc
    assert module_hash(model) != full
    assert hash_tensors({}, None) == hash_tensors({"x": torch.ones(1)}, ["y"])
