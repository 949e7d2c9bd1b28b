"""Dataset registry: torchvision benchmarks plus class-per-subdirectory
image folders (`folder:/path`). Every loader yields PIL images with integer
labels and reports the class count."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from PIL import Image

from .errors import DatasetUnavailable

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp"}


@dataclass
class LoadedDataset:
    images: list
    labels: list[int]
    num_classes: int
    name: str

    def __len__(self):
        return len(self.images)


def _load_torchvision(name: str, root: str, split: str, download: bool) -> LoadedDataset:
    try:
        from torchvision import datasets as tvd
    except Exception as e:  # pragma: no cover
        raise DatasetUnavailable(f"torchvision unavailable: {e}") from e
    builders = {
        "stl10": lambda: tvd.STL10(root, split=split or "test", download=download),
        "cifar10": lambda: tvd.CIFAR10(root, train=(split == "train"), download=download),
        "cifar100": lambda: tvd.CIFAR100(root, train=(split == "train"), download=download),
        "dtd": lambda: tvd.DTD(root, split=split or "test", download=download),
    }
    if name not in builders:
        raise DatasetUnavailable(
            f"unknown dataset {name!r}; known: {sorted(builders)} or folder:<path>"
        )
    try:
        ds = builders[name]()
    except Exception as e:
        raise DatasetUnavailable(f"{name} not available under {root}: {e}") from e
    images, labels = [], []
    for img, label in ds:
        images.append(img if isinstance(img, Image.Image) else Image.fromarray(img))
        labels.append(int(label))
    return LoadedDataset(images, labels, max(labels) + 1, name)


def _load_folder(path: str) -> LoadedDataset:
    root = Path(path)
    if not root.is_dir():
        raise DatasetUnavailable(f"folder dataset {root} does not exist")
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not classes:
        raise DatasetUnavailable(f"{root} has no class subdirectories")
    images, labels = [], []
    for idx, cls in enumerate(classes):
        for f in sorted((root / cls).iterdir()):
            if f.suffix.lower() in IMAGE_SUFFIXES:
                images.append(Image.open(f).convert("RGB"))
                labels.append(idx)
    if not images:
        raise DatasetUnavailable(f"{root} contains no images")
    return LoadedDataset(images, labels, len(classes), f"folder:{root}")


def load_dataset(
    dataset_id: str, root: str = "data", split: str = "", download: bool = False
) -> LoadedDataset:
    if dataset_id.startswith("folder:"):
        return _load_folder(dataset_id.split(":", 1)[1])
    return _load_torchvision(dataset_id.lower(), root, split, download)
