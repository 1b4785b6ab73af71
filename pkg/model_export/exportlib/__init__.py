"""Shared helpers for the export and fixture-generation scripts."""

from .manifest import (
    DEPTH_CONVENTION,
    POSE_FIELDS,
    POSE_LAYOUT,
    ExportManifest,
    default_normalization,
    file_checksum,
    manifest_path_for,
    read_manifest,
    write_manifest,
)
from .models import (
    ARCH_TINY_DEPTH,
    ARCH_TINY_POSE,
    TinyDepthNet,
    TinyPoseNet,
    load_checkpoint,
    save_standin_checkpoint,
)
from .runners import OnnxRunner, TorchRunner, preprocess

__all__ = [
    "ARCH_TINY_DEPTH",
    "ARCH_TINY_POSE",
    "DEPTH_CONVENTION",
    "ExportManifest",
    "OnnxRunner",
    "POSE_FIELDS",
    "POSE_LAYOUT",
    "TinyDepthNet",
    "TinyPoseNet",
    "TorchRunner",
    "default_normalization",
    "file_checksum",
    "load_checkpoint",
    "manifest_path_for",
    "preprocess",
    "read_manifest",
    "save_standin_checkpoint",
    "write_manifest",
]
