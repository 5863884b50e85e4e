"""Writes the scikit-image sample photographs as 8-bit binary PGM files."""
import pathlib
import sys

import numpy as np
from skimage import color, data

NAMES = ["camera", "astronaut", "chelsea", "coffee", "grass", "gravel", "moon", "coins"]


def to_gray_u8(img):
    if img.ndim == 3:
        img = color.rgb2gray(img[..., :3])
    if img.dtype != np.uint8:
        img = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    return img


def write_pgm(path, img):
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(np.ascontiguousarray(img).tobytes())


def main():
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "data/images")
    out.mkdir(parents=True, exist_ok=True)
    for name in NAMES:
        img = to_gray_u8(getattr(data, name)())
        write_pgm(out / f"{name}.pgm", img)
        print(f"{name}: {img.shape[1]}x{img.shape[0]}")


if __name__ == "__main__":
    main()
