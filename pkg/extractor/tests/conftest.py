import numpy as np
import pytest
from PIL import Image


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Three-class folder dataset of tinted noise images."""
    root = tmp_path_factory.mktemp("tiny")
    rng = np.random.default_rng(0)
    tints = [(200, 40, 40), (40, 200, 40), (40, 40, 200)]
    for cls, tint in enumerate(tints):
        d = root / f"class{cls}"
        d.mkdir()
        for i in range(6):
            noise = rng.integers(0, 80, size=(32, 32, 3), dtype=np.uint8)
            img = np.clip(noise + np.array(tint, dtype=np.int32), 0, 255).astype(np.uint8)
            Image.fromarray(img).save(d / f"img{i}.png")
    return root


@pytest.fixture(scope="session")
def noun_corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "nouns.txt"
    path.write_text("\n".join(
        ["tabby_cat", "container_ship", "sports_car", "riflebird", "draft_horse",
         "airliner", "monastery", "espresso", "volcano", "parachute"]
    ))
    return path
