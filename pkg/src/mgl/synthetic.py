"""Procedural camouflage scenes with ground-truth masks and derived edge labels.

A multi-octave value-noise background hosts a blob-shaped foreground whose
texture statistics are pulled toward the background's as the camouflage
strength rises; at full strength the per-channel moments match.  Edge labels
are the morphological gradient of the mask (3x3 full structuring element).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_AREA = 0.02
MAX_AREA = 0.60
MAX_BLOB_TRIES = 32


@dataclass
class SceneConfig:
    height: int = 48
    width: int = 48
    camouflage: float = 0.8  # 0 = obvious foreground, 1 = moment-matched
    octaves: int = 3
    base_cell: int = 16      # lattice cell of the coarsest noise octave

    def validate(self) -> None:
        if self.height < 16 or self.width < 16:
            raise ValueError(f"scene size must be at least 16x16, got "
                             f"{self.height}x{self.width}")
        if not 0.0 <= self.camouflage <= 1.0:
            raise ValueError(f"camouflage strength must lie in [0, 1], "
                             f"got {self.camouflage}")


@dataclass
class SceneSample:
    image: np.ndarray  # (3, H, W) float64 in [0, 1]
    mask: np.ndarray   # (H, W) uint8 in {0, 1}
    edge: np.ndarray   # (H, W) uint8 in {0, 1}
    seed: int


def value_noise(rng, h: int, w: int, cell: int) -> np.ndarray:
    """Bilinear interpolation of random values on an integer lattice."""
    cell = max(cell, 1)
    gh = h // cell + 2
    gw = w // cell + 2
    lattice = rng.random((gh, gw))
    ys = np.arange(h) / cell
    xs = np.arange(w) / cell
    y0 = ys.astype(int)
    x0 = xs.astype(int)
    ty = (ys - y0)[:, None]
    tx = (xs - x0)[None, :]
    a = lattice[np.ix_(y0, x0)]
    b = lattice[np.ix_(y0, x0 + 1)]
    c = lattice[np.ix_(y0 + 1, x0)]
    d = lattice[np.ix_(y0 + 1, x0 + 1)]
    return a * (1 - ty) * (1 - tx) + b * (1 - ty) * tx + c * ty * (1 - tx) + d * ty * tx


def texture(rng, h: int, w: int, octaves: int = 3, base_cell: int = 16) -> np.ndarray:
    """(3, h, w) RGB value-noise texture, kept inside [0.25, 0.75]."""
    out = np.zeros((3, h, w))
    for ch in range(3):
        total = np.zeros((h, w))
        weight = 0.0
        amp = 1.0
        cell = base_cell
        for _ in range(octaves):
            total += amp * value_noise(rng, h, w, cell)
            weight += amp
            amp *= 0.5
            cell = max(cell // 2, 1)
        out[ch] = 0.25 + 0.5 * (total / weight)
    return out


def _periodic_noise(rng, n_points: int, resolution: int) -> np.ndarray:
    """Periodic 1-D value noise over [0, 2*pi), values in [0, 1]."""
    knots = rng.random(n_points)
    pos = np.linspace(0.0, n_points, resolution, endpoint=False)
    i0 = pos.astype(int) % n_points
    i1 = (i0 + 1) % n_points
    frac = pos - np.floor(pos)
    return knots[i0] * (1 - frac) + knots[i1] * frac


def blob_mask(rng, h: int, w: int) -> np.ndarray | None:
    """One star-convex blob from radial noise; None when its area is out of bounds."""
    cy = rng.uniform(0.30, 0.70) * h
    cx = rng.uniform(0.30, 0.70) * w
    base_r = rng.uniform(0.14, 0.32) * min(h, w)
    wobble = _periodic_noise(rng, 8, 256)
    ys = np.arange(h)[:, None] - cy
    xs = np.arange(w)[None, :] - cx
    dist = np.hypot(ys, xs)
    theta = np.arctan2(ys, xs)  # [-pi, pi]
    idx = ((theta + np.pi) / (2 * np.pi) * 256).astype(int) % 256
    radius = base_r * (0.65 + 0.7 * wobble[idx])
    mask = (dist <= radius).astype(np.uint8)
    area = mask.mean()
    if not MIN_AREA <= area <= MAX_AREA:
        return None
    return mask


def edge_from_mask(mask: np.ndarray) -> np.ndarray:
    """Morphological gradient: mask AND NOT erode(mask, 3x3 full element)."""
    m = np.asarray(mask)
    if not np.all((m == 0) | (m == 1)):
        raise ValueError("edge_from_mask: mask must be binary")
    m = m.astype(np.uint8)
    h, w = m.shape
    padded = np.pad(m, 1)  # zero border: boundary pixels erode away
    eroded = np.ones_like(m)
    for dy in range(3):
        for dx in range(3):
            eroded &= padded[dy:dy + h, dx:dx + w]
    return (m & ~eroded).astype(np.uint8)


def _match_region_moments(channel: np.ndarray, region: np.ndarray, target_mean: float,
                          target_sd: float) -> np.ndarray:
    """Shift/scale the texture so its statistics over ``region`` hit the targets,
    then iterate a mean fix-up against [0, 1] clipping."""
    vals = channel[region]
    sd = vals.std()
    sd = sd if sd > 1e-9 else 1.0
    adjusted = (channel - vals.mean()) / sd * target_sd + target_mean
    out = np.clip(adjusted, 0.0, 1.0)
    for _ in range(3):
        drift = target_mean - out[region].mean()
        if abs(drift) < 1e-12:
            break
        out = np.clip(out + drift, 0.0, 1.0)
    return out


def generate_scene(cfg: SceneConfig, seed: int) -> SceneSample:
    """Deterministic scene for one seed; resamples out-of-bounds blobs, bounded."""
    cfg.validate()
    rng = np.random.default_rng([seed, cfg.height, cfg.width])
    h, w = cfg.height, cfg.width
    background = texture(rng, h, w, cfg.octaves, cfg.base_cell)

    mask = None
    for _ in range(MAX_BLOB_TRIES):
        mask = blob_mask(rng, h, w)
        if mask is not None:
            break
    if mask is None:
        raise RuntimeError(f"no blob within area bounds after {MAX_BLOB_TRIES} tries "
                           f"(seed {seed})")

    fg = texture(rng, h, w, cfg.octaves, max(cfg.base_cell // 2, 2))
    region = mask.astype(bool)
    slack = 0.5 * (1.0 - cfg.camouflage)
    image = background.copy()
    for ch in range(3):
        bg_vals = background[ch][~region]
        target_mean = float(np.clip(bg_vals.mean() + slack * rng.uniform(-1.0, 1.0),
                                    0.05, 0.95))
        target_sd = float(np.clip(bg_vals.std() * (1.0 + slack * rng.uniform(-1.0, 1.0)),
                                  0.01, 0.35))
        adjusted = _match_region_moments(fg[ch], region, target_mean, target_sd)
        image[ch][region] = adjusted[region]

    return SceneSample(image=image, mask=mask, edge=edge_from_mask(mask), seed=seed)
