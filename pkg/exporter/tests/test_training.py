import numpy as np
import pytest
import torch
from PIL import Image

from mcexport.cli import main
from mcexport.model import DilatedDensityNet
from mcexport.training import evaluate_loss, load_pair_directory, train


def toy_dataset(n_images=5, size=24, seed=0):
    """Small blob scenes with matching Gaussian-ish density targets."""
    rng = np.random.default_rng(seed)
    dataset = []
    for _ in range(n_images):
        image = np.zeros((size, size, 3), dtype=np.float32)
        target = np.zeros((size, size), dtype=np.float32)
        for _ in range(3):
            cy, cx = rng.integers(4, size - 4, 2)
            yy, xx = np.mgrid[0:size, 0:size]
            blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 8.0).astype(np.float32)
            image[..., :] += blob[..., None]
            target += 0.2 * blob
        image = np.clip(image + rng.normal(0, 0.05, image.shape), 0, 1).astype(np.float32)
        dataset.append(
            (torch.from_numpy(image.transpose(2, 0, 1)), torch.from_numpy(target))
        )
    return dataset


def test_loss_decreases_on_toy_set():
    dataset = toy_dataset()
    torch.manual_seed(0)
    model = DilatedDensityNet()
    initial = evaluate_loss(model, dataset)
    trained = train(dataset, lr=7e-3, epochs=50, model=model, seed=0)
    final = evaluate_loss(trained, dataset)
    assert final < initial


def test_zero_epochs_is_noop():
    torch.manual_seed(1)
    model = DilatedDensityNet()
    before = [p.detach().clone() for p in model.parameters()]
    returned = train(toy_dataset(), epochs=0, model=model)
    assert returned is model
    for old, new in zip(before, model.parameters()):
        assert torch.equal(old, new)


def test_non_finite_loss_aborts():
    bad_target = torch.full((8, 8), float("nan"))
    dataset = [(torch.zeros(3, 8, 8), bad_target)]
    with pytest.raises(RuntimeError, match="diverged"):
        train(dataset, epochs=1, seed=0)


def test_early_stopping_halts(caplog):
    import logging

    dataset = toy_dataset(n_images=2, size=16)
    # lr=0 with dropout disabled never improves, so patience ends training
    frozen = DilatedDensityNet(p_drop=0.0)
    with caplog.at_level(logging.INFO, logger="mcexport.training"):
        model = train(dataset, lr=0.0, epochs=30, patience=2, augment=False,
                      model=frozen, seed=0)
    assert model is frozen
    assert any("early stop" in message for message in caplog.messages)


def test_trained_output_nonnegative():
    dataset = toy_dataset(n_images=2, size=16)
    model = train(dataset, epochs=2, seed=0)
    with torch.no_grad():
        out = model(dataset[0][0].unsqueeze(0))
    assert float(out.min()) >= 0.0


def test_cli_train_and_export(tmp_path):
    rng = np.random.default_rng(2)
    for index in range(3):
        pixels = rng.integers(0, 255, (16, 16, 3), dtype=np.uint8)
        Image.fromarray(pixels).save(tmp_path / f"img_{index}.png")
        np.save(tmp_path / f"img_{index}.npy", rng.random((16, 16)).astype(np.float32) * 0.1)
    checkpoint = tmp_path / "model.pt"
    assert main(["train", "--data", str(tmp_path), "--lr", "7e-3", "--epochs", "2",
                 "--seed", "0", "--out", str(checkpoint)]) == 0
    assert checkpoint.exists()
    out = tmp_path / "stack.npy"
    assert main(["export", "--image", str(tmp_path / "img_0.png"),
                 "--model", str(checkpoint), "--t", "3", "--p-drop", "0.5",
                 "--seed", "7", "--out", str(out)]) == 0
    assert np.load(out).shape == (3, 16, 16)


def test_pair_loader_requires_targets(tmp_path):
    Image.new("RGB", (8, 8)).save(tmp_path / "lonely.png")
    with pytest.raises(FileNotFoundError):
        load_pair_directory(tmp_path)
