#!/usr/bin/env python3
"""Build a small IDX image corpus from scikit-learn's bundled digits.

The image-corpus experiments expect MNIST-style IDX files, which cannot be
downloaded in offline environments.  This script writes a drop-in surrogate
(1797 8x8 grayscale digits, labels 0-9) so the full multi-class pipeline can
be exercised end to end.  Note that the published per-width descent table is
specific to the original corpus and is not expected to hold on the surrogate.

Usage:
    python3 scripts/make_digits_idx.py --out data/digits
"""

import argparse
from pathlib import Path

import numpy as np

from relulab.datasets import write_idx_images, write_idx_labels


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args()

    try:
        from sklearn.datasets import load_digits
    except ImportError:
        parser.error("scikit-learn is required: pip install scikit-learn")

    digits = load_digits()
    # Rescale the 0-16 pixel range to 0-255 so downstream normalization
    # (x / 255, then unit-ball projection) behaves like the original corpus.
    images = np.round(digits.images * (255.0 / 16.0)).astype(np.uint8)
    labels = digits.target.astype(np.uint8)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx_images(out / "train-images-idx3-ubyte", images, rows=8, cols=8)
    write_idx_labels(out / "train-labels-idx1-ubyte", labels)
    print(f"wrote {len(labels)} images to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
