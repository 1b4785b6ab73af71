"""Export manifest: the JSON sidecar the inference adapter decodes against.

The manifest sits next to its model file with the same stem and a ``.json``
suffix. It pins the input signature (shape, dtype, normalization constants),
the output layout, the opset, and a sha256 checksum of the model bytes, so a
runtime can refuse mismatched or stale models.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

POSE_LAYOUT = "pose_cxcywh_conf_kpts"  # [1, N, 11]: cx cy w h conf x1 y1 v1 x2 y2 v2
DEPTH_CONVENTION = "relative-inverse-depth"
POSE_FIELDS = 11


@dataclass
class ExportManifest:
    model_name: str
    task: str  # "pose" or "depth"
    opset_version: int
    input: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    checksum: str = ""

    def validate(self) -> None:
        """Reject manifests the fruitlet-metric adapter could not consume."""
        if self.task not in ("pose", "depth"):
            raise ValueError(f"task must be 'pose' or 'depth', got {self.task!r}")
        shape = self.input.get("shape")
        if not (isinstance(shape, (list, tuple)) and len(shape) == 4
                and shape[0] == 1 and shape[1] == 3 and shape[2] == shape[3] >= 32):
            raise ValueError(f"input shape must be [1, 3, S, S] with S >= 32, got {shape}")
        if self.input.get("dtype") != "float32":
            raise ValueError(f"input dtype must be float32, got {self.input.get('dtype')!r}")
        if self.task == "pose":
            if self.output.get("layout") != POSE_LAYOUT:
                raise ValueError(f"pose output layout must be {POSE_LAYOUT!r}")
        else:
            if self.output.get("convention") != DEPTH_CONVENTION:
                raise ValueError(f"depth output convention must be {DEPTH_CONVENTION!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExportManifest":
        data = json.loads(text)
        manifest = cls(
            model_name=data["model_name"],
            task=data["task"],
            opset_version=int(data["opset_version"]),
            input=data.get("input", {}),
            output=data.get("output", {}),
            checksum=data.get("checksum", ""),
        )
        manifest.validate()
        return manifest


def default_normalization() -> dict:
    # plain 0-255 -> 0-1 scaling; the stand-in models train on nothing, and
    # real exports should overwrite these with the checkpoint's constants
    return {"scale": 1.0 / 255.0, "mean": [0.0, 0.0, 0.0], "std": [1.0, 1.0, 1.0]}


def file_checksum(path: Path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest_path_for(model_path: Path) -> Path:
    return Path(model_path).with_suffix(".json")


def write_manifest(manifest: ExportManifest, model_path: Path) -> Path:
    manifest.validate()
    path = manifest_path_for(model_path)
    path.write_text(manifest.to_json(), encoding="utf-8")
    return path


def read_manifest(model_path: Path) -> ExportManifest:
    return ExportManifest.from_json(manifest_path_for(model_path).read_text(encoding="utf-8"))
