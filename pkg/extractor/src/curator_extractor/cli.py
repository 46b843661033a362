"""``extract`` command: image folder in, EMB1 feature/probability files out.

Exit codes: 0 success, 1 unexpected failure, 2 I/O error, 3 invalid
input (bad directory, undecodable image without --skip-bad), 4 model or
weight loading failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .extract import ExtractionConfig, ExtractionError, extract
from .models import available_models

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_IO = 2
EXIT_INPUT = 3
EXIT_MODEL = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract",
        description="Embed a directory of class-labeled images into EMB1 files.",
    )
    parser.add_argument("--images", required=True,
                        help="directory whose subdirectories are class names")
    parser.add_argument("--model", required=True, choices=available_models(),
                        help="backbone classifier")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--batch", type=int, default=32, help="inference batch size")
    parser.add_argument("--skip-bad", action="store_true",
                        help="skip undecodable images (logged) instead of failing")
    parser.add_argument("--weights", choices=("pretrained", "random"), default="pretrained",
                        help="published classifier weights, or a seeded random init")
    parser.add_argument("--device", default="cpu", help="torch device hint")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for --weights random initialization")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = ExtractionConfig(
        image_root=Path(args.images),
        model_name=args.model,
        out_dir=Path(args.out),
        batch_size=args.batch,
        device=args.device,
        weights=args.weights,
        skip_bad=args.skip_bad,
        seed=args.seed,
    )
    try:
        result = extract(config)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ExtractionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except Exception as exc:  # pragma: no cover
        print(f"error: unexpected failure: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED
    for item in result.skipped:
        print(f"skipped {item['path']}: {item['error']}", file=sys.stderr)
    print(f"embedded {result.n_images} images -> {result.features_path}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
