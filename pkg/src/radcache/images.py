"""Float image I/O (PFM), debug masks (PGM), tone-mapped previews (PNG).

PFM: binary 'PF'/'Pf', little-endian (negative scale), rows stored bottom-up
per the format convention; arrays in memory are top-down.
"""

from __future__ import annotations

import numpy as np


def write_pfm(path, image):
    img = np.asarray(image, dtype=np.float32)
    if img.ndim == 2:
        header = b"Pf\n"
        rows = img[::-1]
    elif img.ndim == 3 and img.shape[2] == 3:
        header = b"PF\n"
        rows = img[::-1]
    else:
        raise ValueError("PFM supports (H, W) or (H, W, 3) images")
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(f"{w} {h}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(np.ascontiguousarray(rows, dtype="<f4").tobytes())


def read_pfm(path):
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic not in (b"PF", b"Pf"):
            raise OSError(f"{path}: not a PFM file")
        dims = fh.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        count = w * h * (3 if magic == b"PF" else 1)
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(count * 4), dtype=dtype, count=count)
    if magic == b"PF":
        img = data.reshape(h, w, 3)
    else:
        img = data.reshape(h, w)
    return np.ascontiguousarray(img[::-1]).astype(np.float32)


def write_pgm(path, image, maxval=65535):
    """16-bit binary PGM for integer debug masks."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("PGM wants a 2D array")
    arr = np.clip(img, 0, maxval).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode())
        fh.write(arr.tobytes())


def tonemap(image):
    """Reinhard x/(1+x) then sRGB-ish gamma 1/2.2, to uint8."""
    img = np.maximum(np.asarray(image, dtype=np.float64), 0.0)
    img = img / (1.0 + img)
    img = np.power(img, 1.0 / 2.2)
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def write_png(path, image):
    from PIL import Image

    arr = tonemap(image)
    if arr.ndim == 2:
        Image.fromarray(arr, mode="L").save(path)
    else:
        Image.fromarray(arr, mode="RGB").save(path)


def compare_images(a, b, eps=1e-8):
    """Error metrics between a test image and a reference.

    rmse: sqrt of the mean squared difference over every channel.
    mre: mean absolute difference normalized by the mean absolute reference,
    i.e. mean(|a - b|) / max(mean(|b|), eps). Both are plain floats.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = a - b
    rmse = float(np.sqrt(np.mean(diff * diff)))
    mre = float(np.mean(np.abs(diff)) / max(np.mean(np.abs(b)), eps))
    return {"rmse": rmse, "mre": mre, "max_abs": float(np.max(np.abs(diff)))}
