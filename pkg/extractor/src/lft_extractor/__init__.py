"""Export CNN convolutional activations as .lft local-feature tensors."""

from .extract import (
    Extraction,
    LayerError,
    conv_layer_names,
    extract_image,
    load_feature_stack,
    truncate_at,
)
from .writer import write_lft

__version__ = "0.1.0"
