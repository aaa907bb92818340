"""Toy-scale training: Adam on an L2 objective, flips, early stopping."""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch import nn

from .model import DilatedDensityNet

logger = logging.getLogger(__name__)


def load_pair_directory(data_dir) -> list[tuple[torch.Tensor, torch.Tensor]]:
    """Pairs of ``<name>.png`` images and ``<name>.npy`` density targets."""
    data_dir = Path(data_dir)
    pairs = []
    for image_path in sorted(data_dir.glob("*.png")):
        target_path = image_path.with_suffix(".npy")
        if not target_path.exists():
            raise FileNotFoundError(f"no density target next to {image_path}")
        image = np.asarray(Image.open(image_path).convert("RGB"), dtype=np.float32) / 255.0
        target = np.load(target_path).astype(np.float32)
        pairs.append(
            (
                torch.from_numpy(image.transpose(2, 0, 1)),
                torch.from_numpy(target),
            )
        )
    if not pairs:
        raise FileNotFoundError(f"no .png/.npy pairs found in {data_dir}")
    return pairs


def train(
    dataset: list[tuple[torch.Tensor, torch.Tensor]],
    lr: float = 7e-3,
    epochs: int = 50,
    model: DilatedDensityNet | None = None,
    augment: bool = True,
    patience: int | None = None,
    seed: int = 0,
) -> DilatedDensityNet:
    """Fit (or further fit) the network; returns it in eval mode.

    ``epochs=0`` is a no-op.  ``patience`` stops early once the epoch loss
    has not improved for that many epochs.  A non-finite loss aborts.
    """
    torch.manual_seed(seed)
    if model is None:
        model = DilatedDensityNet()
    if epochs == 0:
        model.eval()
        return model
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    criterion = nn.MSELoss()
    best_loss = math.inf
    stale_epochs = 0
    model.train()
    for epoch in range(epochs):
        epoch_loss = 0.0
        for image, target in dataset:
            if augment and torch.rand(()) < 0.5:
                image, target = torch.flip(image, (-1,)), torch.flip(target, (-1,))
            optimizer.zero_grad()
            prediction = model(image.unsqueeze(0))[0, 0]
            loss = criterion(prediction, target)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"training diverged (non-finite loss at epoch {epoch})"
                )
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach())
        epoch_loss /= len(dataset)
        logger.info("epoch %d: loss %.6f", epoch, epoch_loss)
        if epoch_loss < best_loss - 1e-12:
            best_loss, stale_epochs = epoch_loss, 0
        else:
            stale_epochs += 1
            if patience is not None and stale_epochs >= patience:
                logger.info("early stop after %d stale epochs", stale_epochs)
                break
    model.eval()
    return model


def evaluate_loss(
    model: DilatedDensityNet, dataset: list[tuple[torch.Tensor, torch.Tensor]]
) -> float:
    criterion = nn.MSELoss()
    model.eval()
    with torch.no_grad():
        losses = [
            float(criterion(model(image.unsqueeze(0))[0, 0], target))
            for image, target in dataset
        ]
    return sum(losses) / len(losses)
