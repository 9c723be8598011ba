import json

import numpy as np
import pytest
from PIL import Image

# (caption color word, RGB) pairs used across fixtures
PALETTE = [
    ("red", (220, 40, 40)), ("green", (40, 180, 60)), ("blue", (40, 70, 220)),
    ("yellow", (230, 220, 50)), ("orange", (240, 150, 40)),
    ("purple", (140, 60, 180)), ("pink", (240, 130, 180)),
    ("brown", (140, 90, 50)), ("gray", (128, 128, 128)),
    ("cyan", (60, 200, 210)),
]


def make_image(path, rgb, size=(24, 24), noise_seed=None):
    arr = np.full((size[1], size[0], 3), rgb, dtype=np.uint8)
    if noise_seed is not None:
        rng = np.random.default_rng(noise_seed)
        jitter = rng.integers(-12, 13, size=arr.shape)
        arr = np.clip(arr.astype(int) + jitter, 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)
    return str(path)


def write_corpus(docs, path):
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            f.write(json.dumps(doc) + "\n")
    return str(path)


@pytest.fixture
def small_corpus(tmp_path):
    """Three documents with solid-color images and matching captions."""
    img_dir = tmp_path / "img"
    img_dir.mkdir()
    docs = []
    for i, (color, rgb) in enumerate(PALETTE[:3]):
        refs = []
        for k in range(2 if i == 0 else 1):
            refs.append(make_image(img_dir / f"d{i}_{k}.png", rgb,
                                   noise_seed=i * 10 + k))
        docs.append({
            "id": f"doc{i}",
            "domain": "wiki",
            "texts": [f"a study of {color} pigments", "second paragraph"],
            "images": refs,
            "queries": [f"what explains the {color} tone?"],
        })
    path = write_corpus(docs, tmp_path / "corpus.jsonl")
    return path, docs
