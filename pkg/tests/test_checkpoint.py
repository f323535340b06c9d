import json

import numpy as np
import pytest

from dedcgan import checkpoint, container, models, training
from dedcgan.exceptions import CheckpointMismatch, FormatError

from helpers import TOY_GAN, toy_images


@pytest.fixture(scope="module")
def trained():
    x, y = toy_images(8, 0)
    return training.train_gan(x, y, training.TrainConfig(epochs=1, activation="relu-bn", **TOY_GAN))


def test_round_trip_bit_exact(tmp_path, trained):
    path = checkpoint.save_checkpoint(tmp_path / "ck", {"disc": trained.model, "gen": trained.generator},
                                      trained.config.to_dict(), 1, trained.rng_state, trained.history)
    ck = checkpoint.load_checkpoint(path)
    assert checkpoint.state_equal(ck["disc"], trained.model)
    assert checkpoint.state_equal(ck["gen"], trained.generator)
    assert ck.epoch == 1 and ck.config == trained.config.to_dict() and ck.history == trained.history
    assert ck.rng_state == trained.rng_state
    names = {e["name"] for e in json.loads((path / "manifest.json").read_text())["tensors"]}
    assert {"disc.conv1.weight", "disc.conv1.offset.weight", "disc.bn2.running_var", "gen.up1.weight"} <= names


def test_saving_twice_is_byte_identical(tmp_path, trained):
    for name in ("a", "b"):
        checkpoint.save_checkpoint(tmp_path / name, {"disc": trained.model}, {"x": 1})
    for f in (tmp_path / "a").rglob("*"):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_descriptor_weight_mismatch(tmp_path):
    path = checkpoint.save_checkpoint(tmp_path / "ck", {"disc": models.Discriminator(3, kernel="standard")})
    man = json.loads((path / "manifest.json").read_text())
    man["models"]["disc"]["kernel"] = "deformable"
    container.write_manifest(path / "manifest.json", man)
    with pytest.raises(CheckpointMismatch):
        checkpoint.load_checkpoint(path)


def test_tensor_shape_mismatch(tmp_path):
    path = checkpoint.save_checkpoint(tmp_path / "ck", {"cnn": models.BaselineCNN(2)})
    container.save_tensor(path / "tensors" / "cnn.head.bias.dgt", np.zeros(7, np.float32))
    with pytest.raises(CheckpointMismatch):
        checkpoint.load_checkpoint(path)


def test_not_a_checkpoint(tmp_path):
    container.write_manifest(tmp_path / "manifest.json", {"format": "other"})
    with pytest.raises(FormatError):
        checkpoint.load_checkpoint(tmp_path)
