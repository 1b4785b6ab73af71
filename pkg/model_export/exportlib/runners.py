"""Run pose/depth models from either runtime with identical preprocessing.

Preprocessing mirrors the fruitlet-metric onnx backend exactly (bilinear
resize to the square input size, scale/mean/std normalization, CHW, batch of
one) so fixtures generated from a checkpoint match what the adapter would
decode from the exported graph.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .manifest import default_normalization, read_manifest


def preprocess(image: np.ndarray, size: int, normalization: dict | None = None) -> np.ndarray:
    norm = normalization or default_normalization()
    resized = np.asarray(
        Image.fromarray(image).resize((size, size), Image.BILINEAR), dtype=np.float32
    )
    scaled = (resized * float(norm.get("scale", 1.0 / 255.0))
              - np.asarray(norm.get("mean", [0, 0, 0]), np.float32)) \
        / np.asarray(norm.get("std", [1, 1, 1]), np.float32)
    return scaled.transpose(2, 0, 1)[None].astype(np.float32)


class TorchRunner:
    """Runs a loaded torch module on preprocessed batches."""

    def __init__(self, model, size: int, normalization: dict | None = None):
        import torch

        self._torch = torch
        self.model = model.eval()
        self.size = size
        self.normalization = normalization or default_normalization()

    def run(self, image: np.ndarray) -> np.ndarray:
        batch = preprocess(image, self.size, self.normalization)
        with self._torch.no_grad():
            out = self.model(self._torch.from_numpy(batch))
        return out.numpy()


class OnnxRunner:
    """Runs an exported graph through onnxruntime, configured by its manifest."""

    def __init__(self, model_path: Path):
        import onnxruntime

        self.model_path = Path(model_path)
        self.manifest = read_manifest(self.model_path)
        self.size = int(self.manifest.input["shape"][2])
        self.normalization = self.manifest.input.get("normalization", default_normalization())
        self.session = onnxruntime.InferenceSession(
            str(self.model_path), providers=["CPUExecutionProvider"]
        )
        self.input_name = self.session.get_inputs()[0].name

    def run(self, image: np.ndarray) -> np.ndarray:
        batch = preprocess(image, self.size, self.normalization)
        return self.session.run(None, {self.input_name: batch})[0]
