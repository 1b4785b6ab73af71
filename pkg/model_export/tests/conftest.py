import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))


@pytest.fixture
def image_dir(tmp_path):
    """Three small synthetic RGB images."""
    rng = np.random.default_rng(42)
    directory = tmp_path / "images"
    directory.mkdir()
    for index in range(3):
        rgb = rng.integers(0, 256, size=(96, 128, 3)).astype(np.uint8)
        Image.fromarray(rgb).save(directory / f"fixture_{index:02d}.png")
    return directory
