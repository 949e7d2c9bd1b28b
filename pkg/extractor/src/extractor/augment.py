"""Named augmentation registry.

The weak and strong recipes are lists of names resolved here, so the exact
augmentation mix is configuration rather than code. Transforms operate on
PIL images before the backbone's own preprocessing.
"""

from __future__ import annotations

from .errors import BadJob

WEAK_DEFAULT = ("resized_crop", "hflip")
STRONG_DEFAULT = ("randaugment", "resized_crop", "hflip")


def _factories():
    from torchvision import transforms as T

    return {
        "resized_crop": lambda size: T.RandomResizedCrop(
            size, scale=(0.6, 1.0), antialias=True
        ),
        "hflip": lambda size: T.RandomHorizontalFlip(),
        "randaugment": lambda size: T.RandAugment(),
        "grayscale": lambda size: T.RandomGrayscale(p=0.2),
        "jitter": lambda size: T.ColorJitter(0.4, 0.4, 0.4, 0.1),
        "blur": lambda size: T.GaussianBlur(kernel_size=3),
    }


def build_transform(names: tuple[str, ...], size: int = 224):
    from torchvision import transforms as T

    factories = _factories()
    unknown = [n for n in names if n not in factories]
    if unknown:
        raise BadJob(f"unknown augmentations {unknown}; known: {sorted(factories)}")
    return T.Compose([factories[n](size) for n in names])
