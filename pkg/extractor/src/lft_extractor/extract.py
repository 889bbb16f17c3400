"""Convolutional-activation capture from pretrained VGG-style networks.

One forward pass per image through the truncated conv stack; the activation
grid at the chosen layer becomes an N x M field of D-dimensional local
features. The image keeps its aspect ratio (both sides scaled by the same
fraction, no crop or pad).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch import nn
from torchvision import models
from torchvision.transforms import functional as TF

IMAGENET_MEAN = [0.485, 0.456, 0.406]
IMAGENET_STD = [0.229, 0.224, 0.225]

ARCHS = {
    "vgg16": (models.vgg16, getattr(models, "VGG16_Weights", None)),
    "vgg19": (models.vgg19, getattr(models, "VGG19_Weights", None)),
}

DEFAULT_LAYER = "conv5_1"
DEFAULT_SCALE = 1.0 / 3.0

# conv stacks are moderately large; reuse them across extract() calls
_FEATURE_CACHE: dict[tuple, nn.Module] = {}


class LayerError(ValueError):
    """The requested layer does not exist in the chosen network."""


def conv_layer_names(features: nn.Module) -> dict[str, int]:
    """Map conv{block}_{n} names onto sequential indices of the conv stack."""
    names = {}
    block, conv_in_block = 1, 0
    for idx, module in enumerate(features):
        if isinstance(module, nn.Conv2d):
            conv_in_block += 1
            names[f"conv{block}_{conv_in_block}"] = idx
        elif isinstance(module, nn.MaxPool2d):
            block += 1
            conv_in_block = 0
    return names


def load_feature_stack(
    arch: str = "vgg16",
    weights: str = "auto",
    seed: int = 0,
) -> nn.Module:
    """Conv stack of the chosen network.

    weights: "auto" tries the torchvision pretrained checkpoint and falls
    back to seeded random initialization when it cannot be fetched; "none"
    asks for seeded random init directly; anything else is a path to a
    state-dict file.
    """
    key = (arch, weights, seed)
    if key in _FEATURE_CACHE:
        return _FEATURE_CACHE[key]
    if arch not in ARCHS:
        raise ValueError(f"unknown architecture '{arch}', choose from {sorted(ARCHS)}")
    factory, weight_enum = ARCHS[arch]

    torch.manual_seed(seed)
    if weights == "auto":
        try:
            model = factory(weights=weight_enum.IMAGENET1K_V1 if weight_enum else None)
        except Exception as exc:
            print(
                f"warning: pretrained weights unavailable ({exc}); "
                f"falling back to random initialization (seed {seed})",
                file=sys.stderr,
            )
            torch.manual_seed(seed)
            model = factory(weights=None)
    elif weights == "none":
        model = factory(weights=None)
    else:
        model = factory(weights=None)
        state = torch.load(weights, map_location="cpu", weights_only=True)
        model.load_state_dict(state)

    features = model.features.eval()
    for p in features.parameters():
        p.requires_grad_(False)
    _FEATURE_CACHE[key] = features
    return features


def truncate_at(features: nn.Module, layer: str, pre_relu: bool = False) -> nn.Module:
    names = conv_layer_names(features)
    if layer not in names:
        raise LayerError(f"layer '{layer}' not in network (have {sorted(names)})")
    idx = names[layer]
    stop = idx + 1
    if not pre_relu and stop < len(features) and isinstance(features[stop], nn.ReLU):
        stop += 1
    return features[:stop]


@dataclass
class Extraction:
    image_id: str
    activation: np.ndarray  # (D, N, M) float32
    original_width: int
    original_height: int


def extract_image(
    path: str | Path,
    stack: nn.Module,
    scale: float = DEFAULT_SCALE,
) -> Extraction:
    """Resize by `scale` (aspect preserved), run the stack, return the grid."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    path = Path(path)
    with Image.open(path) as img:
        img = img.convert("RGB")
        width, height = img.size
        new_w = max(1, round(width * scale))
        new_h = max(1, round(height * scale))
        resized = img.resize((new_w, new_h), Image.BILINEAR)
        x = TF.to_tensor(resized)
    x = TF.normalize(x, IMAGENET_MEAN, IMAGENET_STD).unsqueeze(0)
    with torch.no_grad():
        out = stack(x)
    activation = out[0].numpy().astype(np.float32)
    if activation.ndim != 3 or min(activation.shape) < 1:
        raise ValueError(
            f"{path.name}: activation collapsed to {activation.shape}; "
            f"image too small at scale {scale}"
        )
    return Extraction(
        image_id=path.stem,
        activation=activation,
        original_width=width,
        original_height=height,
    )
