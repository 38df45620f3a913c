"""Image containers, analytic dynamic phantoms and synthetic coil maps.

Images are plain complex ``numpy`` arrays laid out as ``(H, W, T)``: rows,
columns, then the respiratory-phase axis. Coil sensitivities are ``(C, H, W)``.
Everything on the solver path is complex128.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PHANTOM_KINDS = ("shepp_logan", "ellipse_dynamic")

# sub-pixel samples per axis when rasterizing ellipses
_SUPERSAMPLE = 8

# modified Shepp-Logan (Toft): intensity, semi-axes (a, b), center (x0, y0), angle [deg]
_SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)
_SHEPP_LOGAN_MOVING = 4


def check_image(x: np.ndarray, name: str = "image") -> np.ndarray:
    """Validate a ``(H, W, T)`` complex image and return it as complex128."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise ValueError(f"{name} must have shape (H, W, T), got {x.shape}")
    H, W, T = x.shape
    if H < 2 or W < 2 or T < 1:
        raise ValueError(f"{name} needs H >= 2, W >= 2, T >= 1, got {x.shape}")
    x = x.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_coils(maps: np.ndarray) -> np.ndarray:
    maps = np.asarray(maps)
    if maps.ndim != 3 or maps.shape[0] < 1:
        raise ValueError(f"coil maps must have shape (C >= 1, H, W), got {maps.shape}")
    maps = maps.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(maps)):
        raise ValueError("coil maps contain non-finite values")
    return maps


def support_mask(H: int, W: int) -> np.ndarray:
    """Boolean mask of the circle inscribed in an ``H x W`` grid."""
    r, c = _centered_grid(H, W)
    radius = min(H, W) / 2
    return r**2 + c**2 <= radius**2


@dataclass(frozen=True)
class PhantomSpec:
    """Recipe for a dynamic phantom.

    ``motion_amplitude`` is the total downward travel of the moving ellipse
    over all phases, as a fraction of ``H``. ``seed`` jitters the geometry of
    ``ellipse_dynamic`` phantoms so different seeds act as different subjects;
    the Shepp-Logan phantom ignores it.
    """

    kind: str = "ellipse_dynamic"
    H: int = 64
    W: int = 64
    T: int = 4
    motion_amplitude: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PHANTOM_KINDS:
            raise ValueError(f"unknown phantom kind {self.kind!r}, expected one of {PHANTOM_KINDS}")
        if self.H < 2 or self.W < 2 or self.T < 1:
            raise ValueError(f"phantom dimensions must satisfy H, W >= 2 and T >= 1, got "
                             f"({self.H}, {self.W}, {self.T})")
        if not 0.0 <= self.motion_amplitude <= 0.25:
            raise ValueError(f"motion_amplitude must lie in [0, 0.25], got {self.motion_amplitude}")


def _centered_grid(H, W):
    r = np.arange(H, dtype=float)[:, None] - H // 2
    c = np.arange(W, dtype=float)[None, :] - W // 2
    return r, c


def _subpixel_coords(H, W):
    """Normalized (x, y) sample positions, ``(H*s, W*s)`` each, y pointing up."""
    s = _SUPERSAMPLE
    off = (np.arange(s) + 0.5) / s - 0.5
    rows = (np.arange(H)[:, None] + off[None, :]).ravel()
    cols = (np.arange(W)[:, None] + off[None, :]).ravel()
    y = -(rows - H // 2) / (H / 2)
    x = (cols - W // 2) / (W / 2)
    return np.meshgrid(x, y, indexing="xy")


def _ellipse_coverage(X, Y, a, b, x0, y0, phi_deg):
    """Fraction of each pixel covered by the ellipse (supersampled)."""
    phi = np.deg2rad(phi_deg)
    xr = (X - x0) * np.cos(phi) + (Y - y0) * np.sin(phi)
    yr = -(X - x0) * np.sin(phi) + (Y - y0) * np.cos(phi)
    inside = ((xr / a) ** 2 + (yr / b) ** 2 <= 1.0).astype(float)
    s = _SUPERSAMPLE
    h, w = inside.shape[0] // s, inside.shape[1] // s
    return inside.reshape(h, s, w, s).mean(axis=(1, 3))


def _phase_shift(spec: PhantomSpec, t: int) -> float:
    """Downward shift of the moving ellipse at phase ``t`` in normalized units."""
    if spec.T == 1:
        return 0.0
    pixels = spec.motion_amplitude * spec.H * t / (spec.T - 1)
    return pixels / (spec.H / 2)


def _dynamic_layers(seed):
    """Painter-ordered ellipses ``(value, a, b, x0, y0, phi)``; the last one moves."""
    rng = np.random.default_rng(seed)
    j = lambda scale: rng.uniform(-scale, scale)  # noqa: E731
    body = (0.35 + j(0.05), 0.80 + j(0.05), 0.62 + j(0.05), 0.0, -0.05 + j(0.03), j(5.0))
    spine = (0.95 + j(0.05), 0.10 + j(0.02), 0.10 + j(0.02), j(0.05), -0.48 + j(0.03), 0.0)
    kidney = (0.80 + j(0.1), 0.10 + j(0.02), 0.16 + j(0.02), -0.40 + j(0.05), -0.30 + j(0.04), 20 + j(10))
    vessel = (1.00, 0.06 + j(0.01), 0.06 + j(0.01), 0.10 + j(0.05), -0.25 + j(0.05), 0.0)
    liver = (0.65 + j(0.1), 0.40 + j(0.05), 0.25 + j(0.04), 0.25 + j(0.05), 0.30 + j(0.04), -15 + j(10))
    return [body, spine, kidney, vessel, liver]


def moving_mask(spec: PhantomSpec) -> np.ndarray:
    """Pixel coverage ``(H, W, T)`` of the phantom's moving ellipse at each phase."""
    X, Y = _subpixel_coords(spec.H, spec.W)
    if spec.kind == "shepp_logan":
        _, a, b, x0, y0, phi = _SHEPP_LOGAN[_SHEPP_LOGAN_MOVING]
    else:
        _, a, b, x0, y0, phi = _dynamic_layers(spec.seed)[-1]
    return np.stack(
        [_ellipse_coverage(X, Y, a, b, x0, y0 - _phase_shift(spec, t), phi) for t in range(spec.T)],
        axis=-1,
    )


def make_phantom(spec: PhantomSpec) -> np.ndarray:
    """Render a real-valued dynamic phantom with intensities in ``[0, 1]``.

    Only one ellipse moves: it translates downward by
    ``motion_amplitude * H * t / (T - 1)`` pixels at phase ``t``.

    Returns
    -------
    np.ndarray
        complex128 array of shape ``(H, W, T)`` with zero imaginary part.
    """
    X, Y = _subpixel_coords(spec.H, spec.W)
    out = np.zeros((spec.H, spec.W, spec.T))
    for t in range(spec.T):
        dy = _phase_shift(spec, t)
        if spec.kind == "shepp_logan":
            img = np.zeros((spec.H, spec.W))
            for i, (v, a, b, x0, y0, phi) in enumerate(_SHEPP_LOGAN):
                shift = dy if i == _SHEPP_LOGAN_MOVING else 0.0
                img += v * _ellipse_coverage(X, Y, a, b, x0, y0 - shift, phi)
        else:
            img = np.zeros((spec.H, spec.W))
            layers = _dynamic_layers(spec.seed)
            for i, (v, a, b, x0, y0, phi) in enumerate(layers):
                shift = dy if i == len(layers) - 1 else 0.0
                cover = _ellipse_coverage(X, Y, a, b, x0, y0 - shift, phi)
                img = img * (1.0 - cover) + np.clip(v, 0.0, 1.0) * cover
        out[:, :, t] = img
    np.clip(out, 0.0, 1.0, out=out)
    return out.astype(np.complex128)


def coil_centers(H: int, W: int, C: int) -> np.ndarray:
    """Lobe centers ``(C, 2)`` as (row, col) offsets from the image origin.

    Coil ``c`` sits at angle ``2*pi*c/C`` on the inscribed circle, angle 0
    pointing along +columns and pi/2 along +rows.
    """
    R = min(H, W) / 2
    theta = 2 * np.pi * np.arange(C) / C
    return np.stack([R * np.sin(theta), R * np.cos(theta)], axis=1)


def make_coil_maps(H: int, W: int, C: int) -> np.ndarray:
    """Smooth complex Gaussian-lobe sensitivities of shape ``(C, H, W)``.

    Each map has magnitude ``exp(-d^2 / (2 R^2))`` around its lobe center
    (``R`` = inscribed radius) and a linear phase ramp pointing away from the
    image center. Maps are scaled so the sum-of-squares magnitude peaks at 1
    inside the inscribed circle. A single coil is a pure phase ramp with unit
    magnitude.
    """
    if C < 1:
        raise ValueError(f"coil count must be >= 1, got {C}")
    if H < 2 or W < 2:
        raise ValueError(f"coil maps need H, W >= 2, got ({H}, {W})")
    r, c = _centered_grid(H, W)
    R = min(H, W) / 2
    theta = 2 * np.pi * np.arange(C) / C
    maps = np.empty((C, H, W), dtype=np.complex128)
    for i, (cr, cc) in enumerate(coil_centers(H, W, C)):
        phase = 0.5 * np.pi * (r * np.sin(theta[i]) + c * np.cos(theta[i])) / R
        if C == 1:
            mag = np.ones((H, W))
        else:
            mag = np.exp(-((r - cr) ** 2 + (c - cc) ** 2) / (2 * R**2))
        maps[i] = mag * np.exp(1j * phase)
    sos = np.sum(np.abs(maps) ** 2, axis=0)
    maps /= np.sqrt(sos[support_mask(H, W)].max())
    return maps
