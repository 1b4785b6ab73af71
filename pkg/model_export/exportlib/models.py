"""Checkpoint loading plus small deterministic stand-in architectures.

Production weights are deployment-specific and not bundled, so the exporter
accepts two checkpoint forms:

  * a TorchScript file whose forward already emits the declared output
    layout (pose: [1, N, 11] normalized; depth: [1, 1, H, W] inverse depth),
  * a state-dict checkpoint tagged with one of the stand-in architectures
    below, used to exercise the toolchain end to end with tiny models.

Stand-in outputs are squashed through sigmoid/softplus so every emitted
fixture is valid by construction: coordinates and confidences in (0, 1),
visibility channels in (0, 2), depth strictly positive.
"""

from __future__ import annotations

import zipfile
from pathlib import Path

import torch
import torch.nn as nn

ARCH_TINY_POSE = "tiny-pose"
ARCH_TINY_DEPTH = "tiny-depth"

_VISIBILITY_COLUMNS = (7, 10)


class TinyPoseNet(nn.Module):
    """Minimal pose detector emitting [1, N, 11] rows in normalized units."""

    def __init__(self, n_predictions: int = 8):
        super().__init__()
        self.n_predictions = n_predictions
        self.features = nn.Sequential(
            nn.Conv2d(3, 8, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(8, 16, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.AdaptiveAvgPool2d(4),
        )
        self.head = nn.Linear(16 * 4 * 4, n_predictions * 11)
        scale = torch.ones(11)
        scale[list(_VISIBILITY_COLUMNS)] = 2.0  # visibility channels live in [0, 2]
        self.register_buffer("output_scale", scale)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch = x.shape[0]
        features = self.features(x).flatten(1)
        raw = self.head(features).reshape(batch, self.n_predictions, 11)
        return torch.sigmoid(raw) * self.output_scale


class TinyDepthNet(nn.Module):
    """Minimal monocular depth net emitting positive inverse depth [1, 1, H, W]."""

    def __init__(self):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, 8, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(8, 8, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(8, 1, 3, padding=1),
            nn.Softplus(),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


_ARCHITECTURES = {
    ARCH_TINY_POSE: TinyPoseNet,
    ARCH_TINY_DEPTH: TinyDepthNet,
}


def save_standin_checkpoint(path: Path, arch: str, seed: int = 0) -> Path:
    """Write a deterministic stand-in checkpoint for toolchain testing."""
    if arch not in _ARCHITECTURES:
        raise ValueError(f"unknown stand-in architecture {arch!r}")
    torch.manual_seed(seed)
    model = _ARCHITECTURES[arch]()
    torch.save({"arch": arch, "state_dict": model.state_dict()}, path)
    return Path(path)


def _is_torchscript_archive(path: Path) -> bool:
    # TorchScript zips carry serialized code/constants; plain torch.save zips do not
    if not zipfile.is_zipfile(path):
        return False
    with zipfile.ZipFile(path) as archive:
        return any(name.endswith("constants.pkl") for name in archive.namelist())


def load_checkpoint(path: Path) -> nn.Module:
    """Load a TorchScript module or a tagged stand-in state dict, eval mode."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    if _is_torchscript_archive(path):
        return torch.jit.load(str(path), map_location="cpu").eval()
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if not (isinstance(payload, dict) and "arch" in payload and "state_dict" in payload):
        raise ValueError(
            f"{path} is neither TorchScript nor a tagged stand-in checkpoint "
            f"(expected keys 'arch' and 'state_dict')"
        )
    arch = payload["arch"]
    if arch not in _ARCHITECTURES:
        raise ValueError(f"{path}: unknown architecture tag {arch!r}")
    model = _ARCHITECTURES[arch]()
    model.load_state_dict(payload["state_dict"])
    return model.eval()
