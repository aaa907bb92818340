"""Toy dilated-conv density network with MC-dropout stack export."""

from .export import export_stack, load_image, sample_stack
from .model import (
    DROPOUT_AFTER,
    FRONT_END_LAYERS,
    LOCAL_STAGE_LAYERS,
    DilatedDensityNet,
)
from .training import evaluate_loss, load_pair_directory, train

__version__ = "0.1.0"
