"""Stride-offset sub-images of a single corrupted image.

For a factor ``n`` the image is split into ``n*n`` smaller images, one per
offset ``(a, b)``::

    variant[(a, b)][i, j, t] = img[n*i + a, n*j + b, t]

Offset ``(0, 0)`` is the "odd, odd" sub-image in 1-based indexing. The phase
axis is never subsampled. Because neighbouring pixels carry independent noise,
any two variants are noisy views of the same underlying coarse image and can
serve as input and target for each other.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np


@dataclass
class DownsampleSet:
    """``n*n`` variants keyed by offset, each of shape ``(H//n, W//n, T)``."""

    variants: dict
    factor: int

    @property
    def offsets(self):
        return sorted(self.variants)

    @property
    def shape(self):
        return next(iter(self.variants.values())).shape


def multiscale_downsample(img: np.ndarray, n: int = 2) -> DownsampleSet:
    """Split ``img (H, W, T)`` into its ``n*n`` stride-offset variants.

    Rows and columns past ``n * (H // n)`` are dropped rather than padded.
    """
    img = np.asarray(img)
    if img.ndim != 3:
        raise ValueError(f"expected an (H, W, T) image, got shape {img.shape}")
    if n < 2:
        raise ValueError(f"downsampling factor must be >= 2, got {n}")
    H, W, _ = img.shape
    if H < n or W < n:
        raise ValueError(f"image {H}x{W} is smaller than the {n}x{n} downsampling cell")
    h, w = (H // n) * n, (W // n) * n
    variants = {(a, b): img[a:h:n, b:w:n, :].copy() for a in range(n) for b in range(n)}
    return DownsampleSet(variants, n)


def interleave(dset: DownsampleSet, H: int, W: int) -> np.ndarray:
    """Reassemble variants into an ``(H, W, T)`` image (inverse of the split)."""
    n = dset.factor
    if len(dset.variants) != n * n or set(dset.variants) != {(a, b) for a in range(n) for b in range(n)}:
        raise ValueError(f"a factor-{n} set needs exactly {n * n} variants at offsets 0..{n - 1}")
    h, w, T = dset.shape
    if any(v.shape != (h, w, T) for v in dset.variants.values()):
        raise ValueError("variants have inconsistent shapes")
    if (H, W) != (h * n, w * n):
        raise ValueError(f"target size ({H}, {W}) is inconsistent with {n}x variants of size ({h}, {w})")
    first = dset.variants[(0, 0)]
    out = np.empty((H, W, T), dtype=first.dtype)
    for (a, b), v in dset.variants.items():
        out[a::n, b::n, :] = v
    return out


def training_pairs(dset: DownsampleSet):
    """All ordered ``(input, target)`` pairs of distinct variants."""
    return [(dset.variants[p], dset.variants[q]) for p, q in permutations(dset.offsets, 2)]
