"""Dataset registry: cifar10, cifar100, and tiny-imagenet.

Each loader returns an ``ImageDataset``: labels in index order plus an image
iterator in the same order, so extraction output is deterministic.  For
tiny-imagenet the ``test`` split reads the val/ directory, because the
test images ship without labels.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

from .errors import DatasetError

DATA_ROOT_ENV = "AOSA_EXTRACT_DATA_ROOT"
SPLITS = ("train", "test")


@dataclass
class ImageDataset:
    name: str
    split: str
    labels: list[int]
    n_classes: int
    images: Callable[[], Iterator]  # yields PIL images in index order

    def __len__(self) -> int:
        return len(self.labels)


def default_data_root() -> Path:
    return Path(os.environ.get(DATA_ROOT_ENV, Path.home() / ".cache" / "aosa-extractor"))


def _load_cifar(name: str, split: str, data_root: Path) -> ImageDataset:
    try:
        from torchvision import datasets as tv_datasets
    except ImportError as exc:
        raise DatasetError(f"torchvision is required for {name}: {exc}") from exc
    cls = tv_datasets.CIFAR10 if name == "cifar10" else tv_datasets.CIFAR100
    try:
        ds = cls(root=str(data_root), train=split == "train", download=True)
    except Exception as exc:
        raise DatasetError(f"could not load or download {name}: {exc}") from exc
    labels = [int(t) for t in ds.targets]

    def images():
        for i in range(len(ds)):
            yield ds[i][0]

    return ImageDataset(
        name=name,
        split=split,
        labels=labels,
        n_classes=len(ds.classes),
        images=images,
    )


def _load_tiny_imagenet(split: str, data_root: Path) -> ImageDataset:
    from PIL import Image

    root = data_root / "tiny-imagenet-200"
    wnids_file = root / "wnids.txt"
    if not wnids_file.exists():
        raise DatasetError(
            f"tiny-imagenet not found: expected {wnids_file}; place the "
            "extracted tiny-imagenet-200 directory under the data root"
        )
    wnids = [w.strip() for w in wnids_file.read_text().splitlines() if w.strip()]
    class_of = {w: i for i, w in enumerate(wnids)}
    paths: list[Path] = []
    labels: list[int] = []
    if split == "train":
        for wnid in wnids:
            img_dir = root / "train" / wnid / "images"
            if not img_dir.is_dir():
                raise DatasetError(f"tiny-imagenet train images missing for {wnid}")
            for p in sorted(img_dir.iterdir()):
                paths.append(p)
                labels.append(class_of[wnid])
    else:
        # Val split stands in for test; annotations map file name to wnid.
        ann = root / "val" / "val_annotations.txt"
        if not ann.exists():
            raise DatasetError(f"tiny-imagenet val annotations missing: {ann}")
        for line in ann.read_text().splitlines():
            parts = line.split("\t")
            if len(parts) < 2:
                continue
            fname, wnid = parts[0], parts[1]
            if wnid not in class_of:
                raise DatasetError(f"val annotation names unknown class {wnid}")
            paths.append(root / "val" / "images" / fname)
            labels.append(class_of[wnid])

    def images():
        for p in paths:
            with Image.open(p) as im:
                yield im.convert("RGB")

    return ImageDataset(
        name="tiny-imagenet",
        split=split,
        labels=labels,
        n_classes=len(wnids),
        images=images,
    )


#: name -> loader(split, data_root).  Tests may register fakes here.
DATASET_LOADERS: dict[str, Callable[[str, Path], ImageDataset]] = {
    "cifar10": lambda split, root: _load_cifar("cifar10", split, root),
    "cifar100": lambda split, root: _load_cifar("cifar100", split, root),
    "tiny-imagenet": _load_tiny_imagenet,
}


def load_dataset(name: str, split: str, data_root: Path | None = None) -> ImageDataset:
    if name not in DATASET_LOADERS:
        raise DatasetError(
            f"unknown dataset {name!r}; choose from {sorted(DATASET_LOADERS)}"
        )
    if split not in SPLITS:
        raise DatasetError(f"unknown split {split!r}; choose from {SPLITS}")
    return DATASET_LOADERS[name](split, data_root or default_data_root())
