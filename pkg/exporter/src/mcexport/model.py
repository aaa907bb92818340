"""Fully convolutional density network built from dilated convolutions.

Two stages, no pooling, so the output keeps the input resolution: a front
end whose dilation grows (1, 1, 2, 2, 3) to widen context around small
targets, then a local stage whose dilation shrinks back (2, 2, 1, 1) to
re-aggregate spatial detail, closed by a 1x1 projection to a single-channel
density map.  Every convolution is followed by batch norm and ReLU except
the projection, which keeps only the ReLU — the output is therefore
non-negative by construction.

Dropout sits on the three junction blocks (the dilation-3 layer and the two
blocks after it); enabling it at inference yields Monte Carlo samples from
the posterior over predictions.
"""

from __future__ import annotations

import torch
from torch import nn

# (kernel, filters, dilation) per convolution, in forward order.
FRONT_END_LAYERS = [(3, 16, 1), (3, 32, 1), (3, 32, 2), (3, 64, 2), (3, 64, 3)]
LOCAL_STAGE_LAYERS = [(3, 64, 2), (3, 64, 2), (3, 64, 1), (3, 64, 1), (1, 1, 1)]

#: 1-based indices of the convolutions followed by a dropout block.
DROPOUT_AFTER = (5, 6, 7)


class DilatedDensityNet(nn.Module):
    """Single-channel density regressor over RGB input."""

    def __init__(self, in_channels: int = 3, p_drop: float = 0.5):
        super().__init__()
        layers: list[nn.Module] = []
        channels = in_channels
        specs = FRONT_END_LAYERS + LOCAL_STAGE_LAYERS
        for index, (kernel, filters, dilation) in enumerate(specs, start=1):
            last = index == len(specs)
            layers.append(
                nn.Conv2d(
                    channels,
                    filters,
                    kernel_size=kernel,
                    dilation=dilation,
                    padding=dilation * (kernel - 1) // 2,
                )
            )
            if not last:
                layers.append(nn.BatchNorm2d(filters))
            layers.append(nn.ReLU(inplace=True))
            if index in DROPOUT_AFTER:
                layers.append(nn.Dropout2d(p_drop))
            channels = filters
        self.body = nn.Sequential(*layers)
        # A random negative bias on the projection would leave the terminal
        # rectifier dead (zero output, zero gradient); start it alive.
        final_conv = [m for m in self.body if isinstance(m, nn.Conv2d)][-1]
        nn.init.constant_(final_conv.bias, 0.1)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.body(images)

    def set_dropout_probability(self, p_drop: float) -> None:
        for module in self.modules():
            if isinstance(module, nn.Dropout2d):
                module.p = p_drop

    def enable_mc_dropout(self) -> None:
        """Inference mode with live dropout: eval everywhere, train on dropout."""
        self.eval()
        for module in self.modules():
            if isinstance(module, nn.Dropout2d):
                module.train()

    def layer_census(self) -> list[tuple[int, int, int]]:
        """(kernel, filters, dilation) per convolution, for structural checks."""
        return [
            (module.kernel_size[0], module.out_channels, module.dilation[0])
            for module in self.modules()
            if isinstance(module, nn.Conv2d)
        ]
