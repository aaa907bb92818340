"""Monte Carlo dropout sampling and stack export.

``export_stack`` runs T stochastic forward passes with dropout kept live at
inference and writes the clamped results as a ``(T, H, W)`` NPY v1.0 file,
the interchange format the fusion toolkit ingests directly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .model import DilatedDensityNet


def load_image(path) -> np.ndarray:
    """RGB image as float32 (H, W, 3) in [0, 1]."""
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0


def sample_stack(
    model: DilatedDensityNet,
    image: np.ndarray,
    passes: int,
    p_drop: float,
    seed: int,
) -> np.ndarray:
    """T dropout-perturbed predictions, clamped to [0, 1]."""
    if passes < 1:
        raise ValueError(f"need at least one forward pass, got {passes}")
    if not (0.0 <= p_drop < 1.0):
        raise ValueError(f"p_drop must lie in [0, 1), got {p_drop}")
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {image.shape}")
    torch.manual_seed(seed)
    model.set_dropout_probability(p_drop)
    model.enable_mc_dropout()
    batch = torch.from_numpy(image.transpose(2, 0, 1)).unsqueeze(0)
    maps = []
    with torch.no_grad():
        for _ in range(passes):
            prediction = model(batch)[0, 0]
            maps.append(prediction.clamp(0.0, 1.0).numpy().astype(np.float32))
    return np.stack(maps)


def export_stack(
    model: DilatedDensityNet,
    image: np.ndarray,
    passes: int,
    p_drop: float,
    seed: int,
    out_path,
) -> np.ndarray:
    stack = sample_stack(model, image, passes, p_drop, seed)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    np.save(out_path, stack)
    return stack
