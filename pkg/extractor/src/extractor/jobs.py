"""Extraction jobs: encode a dataset (base plus augmented views) or a noun
corpus, and emit the EMB1/LAB1/JSON artifacts the clustering pipeline reads.

Output layout for images, directly consumable by `laic run`:

    <out>/x.emb + x.json        base features
    <out>/truth.lab             dataset labels
    <out>/views/base.emb        copy of the base features
    <out>/views/strong_NN.emb   one block per strong view
    <out>/views/weak_NN.emb     one block per weak view
    <out>/views/views.json      block counts

Every emitted matrix is L2-normalized. View passes are seeded per
(seed, kind, view index), so a rerun with the same seed is byte-identical.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import STRONG_DEFAULT, WEAK_DEFAULT, build_transform
from .backbones import DEFAULT_BACKBONE, load_backbone
from .datasets import load_dataset
from .embfile import l2_normalize, write_emb, write_lab, write_sidecar
from .errors import BadJob, EmptyCorpus

PROMPT_DEFAULT = "a photo of a {noun}"


@dataclass
class ExtractJob:
    dataset: str
    out_dir: str
    backbone: str = DEFAULT_BACKBONE
    split: str = ""
    data_root: str = "data"
    download: bool = False
    n_strong: int = 4
    n_weak: int = 4
    seed: int = 0
    strong_augs: tuple[str, ...] = field(default_factory=lambda: STRONG_DEFAULT)
    weak_augs: tuple[str, ...] = field(default_factory=lambda: WEAK_DEFAULT)

    def __post_init__(self):
        if self.n_strong < 1 or self.n_weak < 1:
            raise BadJob(
                f"need at least one view per kind, got strong={self.n_strong} "
                f"weak={self.n_weak}"
            )


def _view_seed(seed: int, kind: str, index: int) -> int:
    return (seed * 1_000_003 + {"strong": 1, "weak": 2}[kind] * 10_007 + index) % 2**31


def extract_images(job: ExtractJob) -> dict:
    backbone = load_backbone(job.backbone)
    data = load_dataset(job.dataset, root=job.data_root, split=job.split,
                        download=job.download)
    out = Path(job.out_dir)
    views_dir = out / "views"
    views_dir.mkdir(parents=True, exist_ok=True)

    base = l2_normalize(backbone.encode_images(data.images))
    write_emb(base, out / "x.emb", normalized=True)
    write_sidecar(
        out / "x.emb",
        names=[f"{data.name}/{i}" for i in range(len(data))],
        source=backbone.source,
        dim=base.shape[1],
    )
    write_lab(np.asarray(data.labels), data.num_classes, out / "truth.lab")
    write_emb(base, views_dir / "base.emb", normalized=True)

    import torch

    for kind, count, augs in (
        ("strong", job.n_strong, job.strong_augs),
        ("weak", job.n_weak, job.weak_augs),
    ):
        transform = build_transform(tuple(augs))
        for v in range(count):
            torch.manual_seed(_view_seed(job.seed, kind, v))
            augmented = [transform(img) for img in data.images]
            feats = l2_normalize(backbone.encode_images(augmented))
            write_emb(feats, views_dir / f"{kind}_{v:02d}.emb", normalized=True)

    (views_dir / "views.json").write_text(
        json.dumps({"n_strong": job.n_strong, "n_weak": job.n_weak},
                   indent=2, sort_keys=True)
    )
    return {
        "samples": len(data),
        "dim": base.shape[1],
        "num_classes": data.num_classes,
        "out": str(out),
    }


def read_corpus(path: str | Path) -> list[str]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise EmptyCorpus(f"cannot read corpus {path}: {e}") from e
    nouns = [line.strip() for line in lines if line.strip()]
    if not nouns:
        raise EmptyCorpus(f"{path} holds no nouns")
    deduped = list(dict.fromkeys(nouns))
    if len(deduped) != len(nouns):
        warnings.warn(
            f"corpus has {len(nouns) - len(deduped)} duplicate nouns; deduplicated"
        )
    return deduped


def extract_nouns(
    corpus_path: str,
    out_path: str,
    backbone_id: str = DEFAULT_BACKBONE,
    template: str = PROMPT_DEFAULT,
) -> dict:
    backbone = load_backbone(backbone_id)
    nouns = read_corpus(corpus_path)
    prompts = [template.format(noun=n.replace("_", " ")) for n in nouns]
    feats = l2_normalize(backbone.encode_texts(prompts))
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_emb(feats, out, normalized=True)
    write_sidecar(out, names=nouns, source=f"{backbone.source} template={template!r}",
                  dim=feats.shape[1])
    return {"nouns": len(nouns), "dim": feats.shape[1], "out": str(out)}
