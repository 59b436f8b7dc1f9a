"""Binary PPM/PGM I/O and the on-disk dataset layout.

Images are 8-bit binary PPM (P6), masks and edges binary PGM (P5, values
0/255).  Headers are written in the exact canonical form ``P6\\n{W} {H}\\n255\\n``.
A sample occupies ``<dir>/<seed>.ppm``, ``<seed>.mask.pgm`` and ``<seed>.edge.pgm``.
"""

from __future__ import annotations

import os
import re

import numpy as np

from .errors import PnmError
from .synthetic import SceneSample


def _quantize(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(values) * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path: str, rgb: np.ndarray) -> None:
    """Write a (3, H, W) uint8 array as binary PPM."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[0] != 3 or rgb.dtype != np.uint8:
        raise PnmError(f"write_ppm expects (3, H, W) uint8, got {rgb.shape} {rgb.dtype}")
    _, h, w = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb.transpose(1, 2, 0)).tobytes())


def write_pgm(path: str, gray: np.ndarray) -> None:
    """Write an (H, W) uint8 array as binary PGM."""
    gray = np.asarray(gray)
    if gray.ndim != 2 or gray.dtype != np.uint8:
        raise PnmError(f"write_pgm expects (H, W) uint8, got {gray.shape} {gray.dtype}")
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(gray).tobytes())


def _read_header(blob: bytes, magic: bytes, path: str):
    if not blob.startswith(magic):
        raise PnmError(f"{path}: bad magic, expected {magic.decode()}")
    m = re.match(magic + rb"\s+(\d+)\s+(\d+)\s+(\d+)\s", blob)
    if not m:
        raise PnmError(f"{path}: malformed header")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise PnmError(f"{path}: unsupported maxval {maxval}")
    return w, h, m.end()


def read_ppm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    w, h, offset = _read_header(blob, b"P6", path)
    expected = 3 * w * h
    payload = blob[offset:]
    if len(payload) != expected:
        raise PnmError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).transpose(2, 0, 1).copy()


def read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    w, h, offset = _read_header(blob, b"P5", path)
    payload = blob[offset:]
    if len(payload) != w * h:
        raise PnmError(f"{path}: payload is {len(payload)} bytes, expected {w * h}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()


def write_sample(sample: SceneSample, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    write_ppm(os.path.join(directory, f"{sample.seed}.ppm"), _quantize(sample.image))
    write_pgm(os.path.join(directory, f"{sample.seed}.mask.pgm"),
              (sample.mask * 255).astype(np.uint8))
    write_pgm(os.path.join(directory, f"{sample.seed}.edge.pgm"),
              (sample.edge * 255).astype(np.uint8))


def read_sample(directory: str, seed: int) -> SceneSample:
    image = read_ppm(os.path.join(directory, f"{seed}.ppm")).astype(np.float64) / 255.0
    mask = read_pgm(os.path.join(directory, f"{seed}.mask.pgm"))
    edge = read_pgm(os.path.join(directory, f"{seed}.edge.pgm"))
    if mask.shape != image.shape[1:] or edge.shape != image.shape[1:]:
        raise PnmError(f"sample {seed}: image {image.shape[1:]}, mask {mask.shape}, "
                       f"edge {edge.shape} disagree")
    return SceneSample(image=image, mask=(mask > 127).astype(np.uint8),
                       edge=(edge > 127).astype(np.uint8), seed=seed)


def list_split(root: str, split: str) -> list[int]:
    """Seeds present in one dataset split, ascending."""
    directory = os.path.join(root, split)
    if not os.path.isdir(directory):
        return []
    seeds = []
    for name in os.listdir(directory):
        if name.endswith(".ppm"):
            stem = name[:-4]
            if stem.isdigit():
                seeds.append(int(stem))
    return sorted(seeds)


def read_split(root: str, split: str) -> list[SceneSample]:
    return [read_sample(os.path.join(root, split), seed) for seed in list_split(root, split)]
