#!/usr/bin/env python3
"""Convert a pose-detection checkpoint to ONNX plus its JSON manifest.

    python export_pose.py --checkpoint weights.pt --size 640 --out exported/

The checkpoint is either a TorchScript module whose forward emits
[1, N, 11] normalized rows (cx cy w h conf x1 y1 v1 x2 y2 v2) or a tagged
stand-in checkpoint created by exportlib.save_standin_checkpoint. The
exported graph takes float32 [1, 3, S, S] input; the default 640 matches the
resolution the detection models train at.
"""

import argparse
import sys
from pathlib import Path

from exportlib.models import load_checkpoint
from exportlib.onnx_export import export_model


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--checkpoint", required=True, help="TorchScript or stand-in checkpoint")
    parser.add_argument("--size", type=int, default=640, help="square input size (default 640)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--name", default=None, help="model name (default: checkpoint stem)")
    parser.add_argument("--opset", type=int, default=17)
    args = parser.parse_args(argv)

    try:
        model = load_checkpoint(Path(args.checkpoint))
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    name = args.name or Path(args.checkpoint).stem
    try:
        model_path, manifest = export_model(
            model, task="pose", model_name=name, out_dir=Path(args.out),
            input_size=args.size, opset=args.opset,
        )
    except ImportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {model_path} (opset {manifest.opset_version}, "
          f"input {manifest.input['shape']}, output {manifest.output['shape']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
