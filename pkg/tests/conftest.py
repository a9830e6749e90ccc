import numpy as np
import pytest
from PIL import Image

from harborscan.annotations import ClassList

SHIP_CLASSES = ClassList(("cargo", "naval", "oil", "tug"))


@pytest.fixture
def ship_classes():
    return SHIP_CLASSES


def make_image(path, width=64, height=48, seed=0, mode="RGB"):
    """Write a small noise image so headers and pixels are both readable."""
    rng = np.random.default_rng(seed)
    if mode == "L":
        arr = rng.integers(0, 256, size=(height, width), dtype=np.uint8)
    else:
        arr = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr, mode=mode).save(path)
    return path


def make_dataset(root, files, classes=SHIP_CLASSES):
    """Build a dataset tree from {relative_image_path: annotation_text_or_None}."""
    for rel, ann_text in files.items():
        img = root / rel
        make_image(img, seed=abs(hash(rel)) % 2**31)
        if ann_text is not None:
            img.with_suffix(".txt").write_text(ann_text, encoding="utf-8")
    (root / "classes.names").write_text("\n".join(classes.names) + "\n", encoding="utf-8")
    return root
