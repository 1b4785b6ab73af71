"""torch -> ONNX conversion with checker validation and manifest emission."""

from __future__ import annotations

from pathlib import Path

import torch

from .manifest import (
    DEPTH_CONVENTION,
    POSE_LAYOUT,
    ExportManifest,
    default_normalization,
    file_checksum,
    write_manifest,
)


def export_model(
    model: torch.nn.Module,
    task: str,
    model_name: str,
    out_dir: Path,
    input_size: int,
    opset: int = 17,
) -> tuple[Path, ExportManifest]:
    """Export a loaded module, run the ONNX checker, and write the manifest.

    Requires the ``onnx`` package (torch's exporter serializes through it);
    raises ImportError with a clear message when it is missing.
    """
    try:
        import onnx
    except ImportError as exc:
        raise ImportError(
            "the 'onnx' package is required for export; install the onnx extra"
        ) from exc

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_path = out_dir / f"{model_name}.onnx"
    dummy = torch.zeros(1, 3, input_size, input_size, dtype=torch.float32)
    model = model.eval()

    try:
        # TorchScript-based exporter: needs only the onnx package
        torch.onnx.export(
            model, (dummy,), str(model_path),
            input_names=["images"], output_names=["pred"],
            opset_version=opset, dynamo=False,
        )
    except TypeError:
        # newer torch without the dynamo flag
        torch.onnx.export(
            model, (dummy,), str(model_path),
            input_names=["images"], output_names=["pred"],
            opset_version=opset,
        )

    onnx.checker.check_model(str(model_path))

    with torch.no_grad():
        output_shape = list(model(dummy).shape)
    output: dict = {"name": "pred", "shape": output_shape}
    if task == "pose":
        output["layout"] = POSE_LAYOUT
    else:
        output["convention"] = DEPTH_CONVENTION
    manifest = ExportManifest(
        model_name=model_name,
        task=task,
        opset_version=opset,
        input={
            "name": "images",
            "shape": [1, 3, input_size, input_size],
            "dtype": "float32",
            "normalization": default_normalization(),
        },
        output=output,
        checksum=file_checksum(model_path),
    )
    write_manifest(manifest, model_path)
    return model_path, manifest
