#!/usr/bin/env python3
"""Regenerate the bundled 128x128 grayscale test image (tests/data/scene128.pgm).

Uses scikit-image's camera photograph, block-averaged 512 -> 128, when
scikit-image is available; otherwise falls back to a synthetic piecewise-
smooth scene (shaded background, disk, bar, mild texture) with the same
statistics a natural test image needs: smooth regions, strong edges at
several orientations, and moderate texture.
"""

import pathlib
import sys

import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data" / "scene128.pgm"


def natural_image() -> np.ndarray:
    from skimage import data

    img = data.moon().astype(np.float64)
    return img.reshape(128, 4, 128, 4).mean(axis=(1, 3))


def synthetic_image() -> np.ndarray:
    rng = np.random.default_rng(7)
    r, c = np.meshgrid(np.arange(128), np.arange(128), indexing="ij")
    img = 90.0 + 0.55 * c + 0.25 * r                      # illumination gradient
    disk = (r - 44.0) ** 2 + (c - 52.0) ** 2 < 28.0**2
    img[disk] = 190.0 - 0.4 * r[disk]
    img += 55.0 * np.tanh((r - 0.7 * c - 20.0) / 2.0)      # diagonal edge
    bar = (np.abs(c - 96) < 7) & (r > 40)
    img[bar] = 35.0 + 0.3 * r[bar]
    img += 4.0 * np.sin(2 * np.pi * r / 9.0) * (c > 64)    # directional texture
    img += rng.normal(0.0, 1.5, img.shape)
    return np.clip(img, 0, 255)


def main() -> int:
    try:
        img = natural_image()
        source = "skimage moon, 4x4 block mean"
    except Exception:
        img = synthetic_image()
        source = "synthetic piecewise-smooth scene"
    data = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with open(OUT, "wb") as fh:
        fh.write(b"P5\n128 128\n255\n")
        fh.write(data.tobytes())
    print(f"wrote {OUT} ({source})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
