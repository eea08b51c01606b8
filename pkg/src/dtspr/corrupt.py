"""Severity-parameterized photometric corruptions for RGB frames.

Three transforms (hue rotation, brightness, contrast) at severities 1..5,
applied hue -> brightness -> contrast.  All are deterministic; corrupting a
dataset never touches its DT payloads.  HSV conversion uses the hexagonal
model on [0, 1] floats with round-half-up back to uint8.
"""
from __future__ import annotations

import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .frames import load_dataset, read_manifest, write_dtseq, write_manifest

BRIGHTNESS_DELTA = (0.1, 0.2, 0.3, 0.4, 0.5)
CONTRAST_SCALE = (0.4, 0.3, 0.2, 0.1, 0.05)
HUE_DEGREES = (18.0, 36.0, 54.0, 72.0, 90.0)


def _check_severity(severity: int) -> int:
    if not 1 <= severity <= 5:
        raise ValueError(f"severity must be 1..5, got {severity}")
    return int(severity)


def to_u8(x: np.ndarray) -> np.ndarray:
    """Round-half-up from [0, 1] floats to uint8."""
    return np.floor(np.clip(x, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Hexagonal-model RGB -> HSV, all channels on [0, 1]."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    dd = np.where(delta > 0, delta, 1.0)
    rc = (maxc - r) / dd
    gc = (maxc - g) / dd
    bc = (maxc - b) / dd
    h = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, maxc], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Hexagonal-model HSV -> RGB on [0, 1]."""
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def brightness(rgb: np.ndarray, severity: int) -> np.ndarray:
    """Add {0.1..0.5} to the HSV value channel, clamped to [0, 1]."""
    c = BRIGHTNESS_DELTA[_check_severity(severity) - 1]
    hsv = rgb_to_hsv(rgb.astype(np.float64) / 255.0)
    hsv[..., 2] = np.clip(hsv[..., 2] + c, 0.0, 1.0)
    return to_u8(hsv_to_rgb(hsv))


def contrast(rgb: np.ndarray, severity: int) -> np.ndarray:
    """Scale every channel toward the whole-image mean by {0.4..0.05}."""
    c = CONTRAST_SCALE[_check_severity(severity) - 1]
    x = rgb.astype(np.float64) / 255.0
    m = x.mean()
    return to_u8((x - m) * c + m)


def hue_shift(rgb: np.ndarray, severity: int) -> np.ndarray:
    """Rotate hue by {18..90} degrees; saturation and value untouched.

    Hue is snapped to a per-pixel lattice whose cell divides 18 degrees and
    stays below the pixel's own hue resolution (cell = 18/m degrees with
    m = ceil(0.15 * (max - min))).  Repeated shifts then compose without
    quantization drift: 20 successive 18-degree shifts return to the start
    within one code value per channel.
    """
    degrees = HUE_DEGREES[_check_severity(severity) - 1]
    return rotate_hue(rgb, degrees)


def rotate_hue(rgb: np.ndarray, degrees: float) -> np.ndarray:
    x = rgb.astype(np.float64) / 255.0
    delta = rgb.max(axis=-1).astype(np.float64) - rgb.min(axis=-1).astype(np.float64)
    hsv = rgb_to_hsv(x)
    m = np.maximum(1.0, np.ceil(0.15 * delta))
    cells_per_turn = 20.0 * m  # 18 degrees == m cells
    cells = np.floor(hsv[..., 0] * cells_per_turn + 0.5)
    hsv[..., 0] = ((cells + (degrees / 18.0) * m) % cells_per_turn) / cells_per_turn
    return to_u8(hsv_to_rgb(hsv))


@dataclass(frozen=True)
class CorruptionSpec:
    """Per-transform severities, 0 meaning the transform is skipped."""

    hue_severity: int = 0
    brightness_severity: int = 0
    contrast_severity: int = 0

    def __post_init__(self):
        for name, s in (("hue", self.hue_severity), ("brightness", self.brightness_severity),
                        ("contrast", self.contrast_severity)):
            if not 0 <= s <= 5:
                raise ValueError(f"{name} severity must be 0..5, got {s}")

    @property
    def is_identity(self) -> bool:
        return self.hue_severity == 0 and self.brightness_severity == 0 and self.contrast_severity == 0


def combined(rgb: np.ndarray, spec: CorruptionSpec) -> np.ndarray:
    """Apply hue, then brightness, then contrast, skipping severity-0 entries."""
    out = rgb
    if spec.hue_severity:
        out = hue_shift(out, spec.hue_severity)
    if spec.brightness_severity:
        out = brightness(out, spec.brightness_severity)
    if spec.contrast_severity:
        out = contrast(out, spec.contrast_severity)
    return out.copy() if out is rgb else out


def corrupt_dataset(in_dir, out_dir, spec: CorruptionSpec) -> None:
    """Write a corrupted copy of a dataset; DT payloads are copied verbatim.

    An identity spec copies files byte-for-byte.  Every video in the input
    must carry RGB unless the spec is the identity.
    """
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = read_manifest(in_dir)
    if spec.is_identity:
        for row in rows:
            shutil.copyfile(in_dir / row.file, out_dir / row.file)
        write_manifest(rows, out_dir)
        return
    for seq in load_dataset(in_dir):
        if not seq.has_rgb:
            raise ValueError(f"video {seq.video_id} has no RGB; cannot corrupt")
        for t in range(seq.n_frames):
            seq.rgb[t] = combined(seq.rgb[t], spec)
        write_dtseq(seq, out_dir / f"{seq.video_id}.dtseq")
    write_manifest(rows, out_dir)
