#!/usr/bin/env python3
"""Convert a monocular depth checkpoint to ONNX plus its JSON manifest.

    python export_depth.py --checkpoint depth.pt --size 518 --out exported/

The exported graph takes float32 [1, 3, S, S] and emits relative inverse
depth [1, 1, S, S]; the manifest declares that convention so the inference
adapter knows to fit scale and shift before treating values as metric.
"""

import argparse
import sys
from pathlib import Path

from exportlib.models import load_checkpoint
from exportlib.onnx_export import export_model


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--checkpoint", required=True, help="TorchScript or stand-in checkpoint")
    parser.add_argument("--size", type=int, default=518, help="square input size (default 518)")
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
            model, task="depth", model_name=name, out_dir=Path(args.out),
            input_size=args.size, opset=args.opset,
        )
    except ImportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {model_path} (opset {manifest.opset_version}, "
          f"output declared {manifest.output['convention']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
