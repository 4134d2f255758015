"""Regenerate the bundled natural test sequence.

Pans a window across the public-domain NASA astronaut photograph shipped with
scikit-image, area-averages each crop by 3x and writes 8-bit RGB PNGs.
Per-frame motion is (5/3, 1) LR pixels, so bilinear resampling of adjacent
frames sees genuinely fractional displacements.
"""
import pathlib

import numpy as np
from PIL import Image
from skimage import data

OUT = pathlib.Path(__file__).resolve().parent.parent / "crates/core/data/natural"
FRAMES = 10
CROP = 384
FACTOR = 3
STEP = (3, 5)  # (dy, dx) in source pixels per frame


def main():
    src = data.astronaut().astype(np.float64)
    OUT.mkdir(parents=True, exist_ok=True)
    for i in range(FRAMES):
        oy, ox = 40 + STEP[0] * i, 40 + STEP[1] * i
        crop = src[oy:oy + CROP, ox:ox + CROP]
        small = crop.reshape(CROP // FACTOR, FACTOR, CROP // FACTOR, FACTOR, 3).mean(axis=(1, 3))
        img = np.clip(np.rint(small), 0, 255).astype(np.uint8)
        Image.fromarray(img, "RGB").save(OUT / f"frame_{i:04d}.png")


if __name__ == "__main__":
    main()
