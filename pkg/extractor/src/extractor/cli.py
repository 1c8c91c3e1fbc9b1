"""Command-line entry point: `aosa-extract --dataset cifar10 --encoder clip --out f.aosa`."""

from __future__ import annotations

import argparse
import sys

from .datasets import DATASET_LOADERS, SPLITS
from .encoders import ENCODER_LOADERS
from .errors import ExtractorError
from .job import ExtractJob, extract


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aosa-extract",
        description="Extract image-dataset embeddings with a pretrained "
        "encoder and write the binary feature-store format.",
    )
    parser.add_argument("--dataset", required=True, choices=sorted(DATASET_LOADERS))
    parser.add_argument("--encoder", required=True, choices=sorted(ENCODER_LOADERS))
    parser.add_argument("--out", required=True, help="output feature-store path")
    parser.add_argument("--split", default="train", choices=SPLITS)
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--data-root", default=None, help="dataset cache directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        job = ExtractJob(
            dataset=args.dataset,
            encoder=args.encoder,
            output=args.out,
            split=args.split,
            batch_size=args.batch_size,
            device=args.device,
            data_root=args.data_root,
        )
        out = extract(job)
    except ExtractorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
