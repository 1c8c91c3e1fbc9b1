"""Encoder registry: a vision-language model plus pretrained convolutional
backbones, mirroring the set the detection quality was studied against.

Every encoder exposes a ``variant`` string (recorded in the output sidecar,
since checkpoint naming is otherwise lost) and a batched encode call that
maps PIL images to one feature row each.  Preprocessing is whatever the
encoder's own library ships as standard.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EncoderError

CLIP_CHECKPOINT = "openai/clip-vit-base-patch32"


@dataclass
class Encoder:
    name: str
    variant: str
    encode_batch: Callable[[list], np.ndarray]  # (B images) -> (B, dim) float32


def _check_device(device: str) -> str:
    if device == "cpu":
        return device
    try:
        import torch
    except ImportError as exc:
        raise EncoderError(f"torch is required for device {device!r}: {exc}") from exc
    if device.startswith("cuda") and not torch.cuda.is_available():
        raise EncoderError(f"device {device!r} requested but CUDA is unavailable")
    return device


def _load_clip(device: str) -> Encoder:
    device = _check_device(device)
    try:
        import torch
        from transformers import CLIPModel, CLIPProcessor
    except ImportError as exc:
        raise EncoderError(f"transformers/torch are required for clip: {exc}") from exc
    try:
        model = CLIPModel.from_pretrained(CLIP_CHECKPOINT).to(device).eval()
        processor = CLIPProcessor.from_pretrained(CLIP_CHECKPOINT)
    except Exception as exc:
        raise EncoderError(f"could not load clip weights: {exc}") from exc

    def encode_batch(images: list) -> np.ndarray:
        inputs = processor(images=images, return_tensors="pt").to(device)
        with torch.no_grad():
            feats = model.get_image_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)

    return Encoder(name="clip", variant=CLIP_CHECKPOINT, encode_batch=encode_batch)


def _load_resnet(name: str, device: str) -> Encoder:
    device = _check_device(device)
    try:
        import torch
        from torchvision import models, transforms
    except ImportError as exc:
        raise EncoderError(f"torchvision/torch are required for {name}: {exc}") from exc
    builders = {
        "resnet18": (models.resnet18, "IMAGENET1K_V1"),
        "resnet34": (models.resnet34, "IMAGENET1K_V1"),
        "resnet50": (models.resnet50, "IMAGENET1K_V1"),
    }
    builder, weights = builders[name]
    try:
        net = builder(weights=weights).to(device).eval()
    except Exception as exc:
        raise EncoderError(f"could not load {name} weights: {exc}") from exc
    # Penultimate activations serve as the embedding.
    net.fc = torch.nn.Identity()
    preprocess = transforms.Compose(
        [
            transforms.Resize(256),
            transforms.CenterCrop(224),
            transforms.ToTensor(),
            transforms.Normalize(
                mean=[0.485, 0.456, 0.406], std=[0.229, 0.224, 0.225]
            ),
        ]
    )

    def encode_batch(images: list) -> np.ndarray:
        batch = torch.stack([preprocess(im.convert("RGB")) for im in images]).to(device)
        with torch.no_grad():
            feats = net(batch)
        return feats.cpu().numpy().astype(np.float32)

    return Encoder(name=name, variant=f"torchvision/{name}-{weights}", encode_batch=encode_batch)


#: name -> loader(device).  Tests may register fakes here.
ENCODER_LOADERS: dict[str, Callable[[str], Encoder]] = {
    "clip": _load_clip,
    "resnet18": lambda device: _load_resnet("resnet18", device),
    "resnet34": lambda device: _load_resnet("resnet34", device),
    "resnet50": lambda device: _load_resnet("resnet50", device),
}


def load_encoder(name: str, device: str = "cpu") -> Encoder:
    if name not in ENCODER_LOADERS:
        raise EncoderError(
            f"unknown encoder {name!r}; choose from {sorted(ENCODER_LOADERS)}"
        )
    return ENCODER_LOADERS[name](device)
