"""lft-extract: run images through a pretrained CNN and write .lft tensors.

Exit codes: 0 success, 1 data/runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from PIL import UnidentifiedImageError

from .extract import (
    ARCHS,
    DEFAULT_LAYER,
    DEFAULT_SCALE,
    LayerError,
    extract_image,
    load_feature_stack,
    truncate_at,
)
from .writer import write_lft

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tiff", ".webp"}


def _scale_arg(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got '{text}'")
    if not 0.0 < value <= 4.0:
        raise argparse.ArgumentTypeError("scale must be in (0, 4]")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lft-extract",
        description="Capture convolutional activations as .lft local-feature tensors.",
    )
    parser.add_argument("--images", required=True, help="directory of input images")
    parser.add_argument("--out", required=True, help="output directory for .lft files")
    parser.add_argument("--layer", default=DEFAULT_LAYER,
                        help="conv layer name, e.g. conv5_1 (default)")
    parser.add_argument("--scale", type=_scale_arg, default=DEFAULT_SCALE,
                        help="resize fraction, aspect preserved (default 1/3)")
    parser.add_argument("--arch", choices=sorted(ARCHS), default="vgg16")
    parser.add_argument("--weights", default="auto",
                        help="'auto' (pretrained, random fallback), 'none' "
                             "(seeded random), or a state-dict path")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for random-init weights")
    parser.add_argument("--pre-relu", action="store_true",
                        help="capture conv output before its ReLU")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    image_dir = Path(args.images)
    paths = sorted(
        p for p in image_dir.glob("*")
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not paths:
        print(f"error: no images under {image_dir}", file=sys.stderr)
        return 1

    try:
        stack = truncate_at(
            load_feature_stack(args.arch, args.weights, args.seed),
            args.layer,
            pre_relu=args.pre_relu,
        )
    except LayerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: cannot load weights: {exc}", file=sys.stderr)
        return 1

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    skipped = 0
    for path in paths:
        try:
            result = extract_image(path, stack, scale=args.scale)
        except (OSError, UnidentifiedImageError, ValueError, RuntimeError) as exc:
            print(f"warning: skipping {path.name}: {exc}", file=sys.stderr)
            skipped += 1
            continue
        write_lft(
            out_dir / f"{result.image_id}.lft",
            result.image_id,
            result.activation,
            result.original_width,
            result.original_height,
        )
        written += 1
    if not written:
        print("error: no images could be processed", file=sys.stderr)
        return 1
    print(f"wrote {written} tensors to {out_dir}, skipped {skipped}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
