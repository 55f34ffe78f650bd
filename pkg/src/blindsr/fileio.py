"""File formats: 8-bit PNG images and a small binary tensor container.

Container layout (all integers little-endian uint32):
magic "BSRT" | version | ndim | dims[ndim] | float32 data, C order.
Used for blur kernels, noise maps and the PCA projection matrix.
"""

import struct
from pathlib import Path

import numpy as np
from PIL import Image

MAGIC = b"BSRT"
VERSION = 1


def save_tensor(path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(arr.tobytes())


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        version, ndim = struct.unpack("<II", f.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported container version {version}")
        dims = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
        data = np.frombuffer(f.read(), dtype="<f4")
    expected = int(np.prod(dims)) if ndim else 1
    if data.size != expected:
        raise ValueError(f"{path}: payload has {data.size} values, header says {expected}")
    return data.reshape(dims).astype(np.float32)


def load_png(path) -> np.ndarray:
    """Read an image file as float32 HWC in [0, 1]; alpha is dropped."""
    with Image.open(path) as img:
        if img.mode not in ("RGB", "L"):
            img = img.convert("RGB")
        arr = np.asarray(img, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def save_png(path, image: np.ndarray) -> None:
    """Write a float32 HWC [0, 1] image as 8-bit PNG (values clamped and rounded)."""
    arr = np.clip(image, 0.0, 1.0)
    arr = np.round(arr * 255.0).astype(np.uint8)
    if arr.shape[2] == 1:
        Image.fromarray(arr[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(arr, mode="RGB").save(path)


def list_images(directory) -> list[Path]:
    exts = {".png", ".jpg", ".jpeg", ".bmp"}
    paths = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in exts)
    if not paths:
        raise FileNotFoundError(f"no images found in {directory}")
    return paths
