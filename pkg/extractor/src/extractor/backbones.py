"""Frozen vision-language backbones behind one small interface.

Real checkpoints load lazily through transformers; the deterministic stub
backbone needs no weights and exists for offline smoke runs and tests. Every
backbone reports a `source` string (model id plus library versions) that is
pinned into the emitted sidecars.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

from .errors import BackboneLoadFailure

DEFAULT_BACKBONE = "vit-b-32"

_CLIP_CHECKPOINTS = {
    "vit-b-32": "openai/clip-vit-base-patch32",
    "vit-b-16": "openai/clip-vit-base-patch16",
}
_BLIP_CHECKPOINTS = {
    "blip-vit-b-16": "Salesforce/blip-itm-base-coco",
}


class ClipBackbone:
    def __init__(self, checkpoint: str, batch_size: int = 64):
        try:
            import torch
            import transformers
            from transformers import CLIPModel, CLIPProcessor
        except Exception as e:  # pragma: no cover - import environment dependent
            raise BackboneLoadFailure(f"transformers/torch unavailable: {e}") from e
        try:
            self.model = CLIPModel.from_pretrained(checkpoint)
            self.processor = CLIPProcessor.from_pretrained(checkpoint)
        except Exception as e:
            raise BackboneLoadFailure(f"cannot load {checkpoint}: {e}") from e
        self.model.eval()
        self.torch = torch
        self.batch_size = batch_size
        self.dim = self.model.config.projection_dim
        self.source = (
            f"{checkpoint} transformers={transformers.__version__} "
            f"torch={torch.__version__}"
        )

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        out = []
        with self.torch.no_grad():
            for start in range(0, len(images), self.batch_size):
                batch = self.processor(
                    images=images[start : start + self.batch_size], return_tensors="pt"
                )
                feats = self.model.get_image_features(**batch)
                out.append(feats.cpu().numpy())
        return np.vstack(out).astype(np.float32)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        out = []
        with self.torch.no_grad():
            for start in range(0, len(texts), self.batch_size):
                batch = self.processor(
                    text=texts[start : start + self.batch_size],
                    return_tensors="pt",
                    padding=True,
                    truncation=True,
                )
                feats = self.model.get_text_features(**batch)
                out.append(feats.cpu().numpy())
        return np.vstack(out).astype(np.float32)


class BlipBackbone:
    def __init__(self, checkpoint: str, batch_size: int = 32):
        try:
            import torch
            import transformers
            from transformers import AutoProcessor, BlipForImageTextRetrieval
        except Exception as e:  # pragma: no cover
            raise BackboneLoadFailure(f"transformers/torch unavailable: {e}") from e
        try:
            self.model = BlipForImageTextRetrieval.from_pretrained(checkpoint)
            self.processor = AutoProcessor.from_pretrained(checkpoint)
        except Exception as e:
            raise BackboneLoadFailure(f"cannot load {checkpoint}: {e}") from e
        self.model.eval()
        self.torch = torch
        self.batch_size = batch_size
        self.dim = self.model.config.image_text_hidden_size
        self.source = (
            f"{checkpoint} transformers={transformers.__version__} "
            f"torch={torch.__version__}"
        )

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        out = []
        with self.torch.no_grad():
            for start in range(0, len(images), self.batch_size):
                batch = self.processor(
                    images=images[start : start + self.batch_size], return_tensors="pt"
                )
                hidden = self.model.vision_model(**batch)[0]
                out.append(self.model.vision_proj(hidden[:, 0, :]).cpu().numpy())
        return np.vstack(out).astype(np.float32)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        out = []
        with self.torch.no_grad():
            for start in range(0, len(texts), self.batch_size):
                batch = self.processor(
                    text=texts[start : start + self.batch_size],
                    return_tensors="pt",
                    padding=True,
                    truncation=True,
                )
                hidden = self.model.text_encoder(
                    input_ids=batch["input_ids"],
                    attention_mask=batch["attention_mask"],
                )[0]
                out.append(self.model.text_proj(hidden[:, 0, :]).cpu().numpy())
        return np.vstack(out).astype(np.float32)


class StubBackbone:
    """Deterministic weight-free encoder: images project their 8x8 grayscale
    thumbnail through a fixed random matrix; texts hash to seeded Gaussian
    vectors. Content-identical inputs give bit-identical features on any
    machine, which is what the format and determinism tests need."""

    def __init__(self, dim: int = 32):
        self.dim = dim
        self.source = f"stub-{dim} (deterministic test encoder)"
        rng = np.random.default_rng(1234)
        self._proj = rng.standard_normal((64, dim)).astype(np.float64)

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        feats = np.empty((len(images), self.dim), dtype=np.float64)
        for i, img in enumerate(images):
            thumb = np.asarray(
                img.convert("L").resize((8, 8), Image.BILINEAR), dtype=np.float64
            )
            flat = (thumb.reshape(-1) - thumb.mean()) / 255.0
            feats[i] = flat @ self._proj + 1e-6  # keep rows away from exact zero
        return feats.astype(np.float32)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        feats = np.empty((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            seed = int.from_bytes(digest[:8], "little")
            feats[i] = np.random.default_rng(seed).standard_normal(self.dim)
        return feats.astype(np.float32)


def load_backbone(backbone_id: str):
    if backbone_id in _CLIP_CHECKPOINTS:
        return ClipBackbone(_CLIP_CHECKPOINTS[backbone_id])
    if backbone_id in _BLIP_CHECKPOINTS:
        return BlipBackbone(_BLIP_CHECKPOINTS[backbone_id])
    if backbone_id.startswith("stub"):
        dim = int(backbone_id.split("-")[1]) if "-" in backbone_id else 32
        return StubBackbone(dim)
    raise BackboneLoadFailure(
        f"unknown backbone {backbone_id!r}; known: "
        f"{sorted([*_CLIP_CHECKPOINTS, *_BLIP_CHECKPOINTS, 'stub-<dim>'])}"
    )
