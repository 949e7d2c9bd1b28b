"""CLI: `extract images ...` and `extract nouns ...`."""

from __future__ import annotations

import argparse
import sys

from .augment import STRONG_DEFAULT, WEAK_DEFAULT
from .backbones import DEFAULT_BACKBONE
from .errors import ExtractorError
from .jobs import PROMPT_DEFAULT, ExtractJob, extract_images, extract_nouns


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract",
        description="Encode datasets and noun corpora into EMB1/LAB1 artifacts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("images", help="encode a dataset plus augmented views")
    p.add_argument("--dataset", required=True,
                   help="stl10|cifar10|cifar100|dtd or folder:<path>")
    p.add_argument("--out", required=True)
    p.add_argument("--backbone", default=DEFAULT_BACKBONE)
    p.add_argument("--split", default="")
    p.add_argument("--data-root", default="data")
    p.add_argument("--download", action="store_true")
    p.add_argument("--strong-views", type=int, default=4)
    p.add_argument("--weak-views", type=int, default=4)
    p.add_argument("--strong-augs", nargs="+", default=list(STRONG_DEFAULT))
    p.add_argument("--weak-augs", nargs="+", default=list(WEAK_DEFAULT))
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("nouns", help="encode a noun corpus")
    p.add_argument("--corpus", required=True, help="text file, one noun per line")
    p.add_argument("--out", required=True, help="output .emb path")
    p.add_argument("--backbone", default=DEFAULT_BACKBONE)
    p.add_argument("--template", default=PROMPT_DEFAULT)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "images":
            job = ExtractJob(
                dataset=args.dataset,
                out_dir=args.out,
                backbone=args.backbone,
                split=args.split,
                data_root=args.data_root,
                download=args.download,
                n_strong=args.strong_views,
                n_weak=args.weak_views,
                seed=args.seed,
                strong_augs=tuple(args.strong_augs),
                weak_augs=tuple(args.weak_augs),
            )
            info = extract_images(job)
            print(
                f"encoded {info['samples']} samples ({info['num_classes']} classes) "
                f"at dim {info['dim']} -> {info['out']}"
            )
        else:
            info = extract_nouns(
                args.corpus, args.out, backbone_id=args.backbone,
                template=args.template,
            )
            print(f"encoded {info['nouns']} nouns at dim {info['dim']} -> {info['out']}")
        return 0
    except ExtractorError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
