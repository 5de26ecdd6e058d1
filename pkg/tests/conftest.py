import numpy as np
import pytest

from synthsieve import datagen


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """24 small images on disk with a manifest: 12 camera / 12 synthetic."""
    out = tmp_path_factory.mktemp("tiny-corpus")
    config = datagen.DatasetConfig(
        counts={"camera_proxy": 12, "text_overlay": 6, "stacked": 3, "flat_synthetic": 3},
        size=96, seed=7)
    manifest = datagen.make_dataset(config, str(out))
    return manifest


@pytest.fixture(scope="session")
def micro_train_arrays():
    """In-memory 64px training set: 10 camera / 10 synthetic, JPEG 0.95."""
    imgs = []
    labels = []
    for i in range(10):
        img = datagen.gen_camera_proxy(1000 + i, 64)
        imgs.append(datagen.reencode_jpeg(img, 0.95))
        labels.append(0)
    kinds = ("text_overlay", "stacked", "flat_synthetic")
    for i in range(10):
        img = datagen.gen_synthetic_proxy(2000 + i, 64, kinds[i % 3])
        imgs.append(datagen.reencode_jpeg(img, 0.95))
        labels.append(1)
    return np.stack(imgs), np.array(labels, np.int64)
