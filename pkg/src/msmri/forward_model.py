"""Multicoil radial MRI forward model built on Kaiser-Bessel gridding.

The measurement operator maps an image ``x`` of shape ``(H, W, T)`` to
k-space samples ``y`` of shape ``(C, T, M)``::

    y[i, t] = NUFFT_t(S_i * x[:, :, t])

The NUFFT evaluates ``sum_r img(r) exp(-2 pi i k.r)`` with pixel-centered
coordinates ``r = (row - H//2, col - W//2)`` and ``k = (kx, ky)`` in cycles per
pixel, ``kx`` pairing with columns and ``ky`` with rows. The adjoint is the
exact conjugate transpose of the same gridding pipeline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import i0

from .grid import check_coils, check_image, support_mask

# radial golden angle for full diameter spokes, pi * (sqrt(5) - 1) / 2
GOLDEN_ANGLE = math.pi * (math.sqrt(5.0) - 1.0) / 2.0

_KMAX = np.nextafter(np.float32(0.5), np.float32(0.0))


@dataclass(frozen=True)
class NufftConfig:
    """Gridding parameters.

    ``kernel_beta`` defaults to Beatty's choice for the given width and
    oversampling ratio.
    """

    oversampling: float = 2.0
    kernel_width: int = 4
    kernel_beta: float | None = None

    def __post_init__(self):
        if self.oversampling < 1.25:
            raise ValueError(f"oversampling must be >= 1.25, got {self.oversampling}")
        if self.kernel_width < 2 or self.kernel_width % 2:
            raise ValueError(f"kernel_width must be even and >= 2, got {self.kernel_width}")
        if self.kernel_beta is None:
            w, a = self.kernel_width, self.oversampling
            object.__setattr__(self, "kernel_beta", math.pi * math.sqrt((w / a) ** 2 * (a - 0.5) ** 2 - 0.8))
        if not self.kernel_beta > 0:
            raise ValueError(f"kernel_beta must be > 0, got {self.kernel_beta}")


def _check_coords(coords) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError(f"coords must have shape (M, 2), got {coords.shape}")
    if not np.all(np.isfinite(coords)) or np.any(coords < -0.5) or np.any(coords >= 0.5):
        raise ValueError("k-space coordinates must lie in [-0.5, 0.5)")
    return coords


def _grid_size(n, oversampling):
    g = int(math.ceil(oversampling * n))
    return g + (g % 2)


class NufftPlan:
    """Precomputed gridding operator for one set of coordinates.

    ``forward`` and ``adjoint`` accept arbitrary leading batch axes.
    """

    def __init__(self, coords, H: int, W: int, cfg: NufftConfig | None = None):
        cfg = cfg or NufftConfig()
        self.coords = _check_coords(coords)
        self.H, self.W, self.cfg = H, W, cfg
        self.Gy, self.Gx = _grid_size(H, cfg.oversampling), _grid_size(W, cfg.oversampling)
        width = cfg.kernel_width
        self._scale = self._kernel_ft(np.zeros(1))[0]

        ry = np.arange(H) - H // 2
        rx = np.arange(W) - W // 2
        self._rows = ry % self.Gy
        self._cols = rx % self.Gx
        self.deapod = np.outer(self._kernel_ft(ry / self.Gy), self._kernel_ft(rx / self.Gx)) / self._scale**2

        M = len(self.coords)
        uy = self.coords[:, 1] * self.Gy
        ux = self.coords[:, 0] * self.Gx
        offs = np.arange(width)
        my = np.floor(uy - width / 2).astype(int)[:, None] + 1 + offs
        mx = np.floor(ux - width / 2).astype(int)[:, None] + 1 + offs
        wy = self._kernel(uy[:, None] - my)
        wx = self._kernel(ux[:, None] - mx)
        vals = (wy[:, :, None] * wx[:, None, :]).reshape(M, -1)
        cols = ((my % self.Gy)[:, :, None] * self.Gx + (mx % self.Gx)[:, None, :]).reshape(M, -1)
        rows = np.repeat(np.arange(M), width * width)
        self.interp = sp.csr_matrix(
            (vals.ravel(), (rows, cols.ravel())), shape=(M, self.Gy * self.Gx)
        )
        self.interp.sum_duplicates()
        self.interp_h = self.interp.T.conj().tocsr()

    def _kernel(self, u):
        width, beta = self.cfg.kernel_width, self.cfg.kernel_beta
        z = 1.0 - (2.0 * u / width) ** 2
        return np.where(z >= 0, i0(beta * np.sqrt(np.clip(z, 0.0, None))), 0.0) / self._scale

    def _kernel_ft(self, nu):
        width, beta = self.cfg.kernel_width, self.cfg.kernel_beta
        s = np.sqrt((beta**2 - (np.pi * width * nu) ** 2).astype(complex))
        with np.errstate(invalid="ignore", divide="ignore"):
            val = np.where(np.abs(s) > 1e-12, width * np.sinh(s) / s, width)
        return np.real(val)

    def forward(self, img: np.ndarray) -> np.ndarray:
        img = np.asarray(img, dtype=np.complex128)
        lead = img.shape[:-2]
        if img.shape[-2:] != (self.H, self.W):
            raise ValueError(f"image plane must be ({self.H}, {self.W}), got {img.shape[-2:]}")
        padded = np.zeros(lead + (self.Gy, self.Gx), dtype=np.complex128)
        padded[..., self._rows[:, None], self._cols[None, :]] = img / self.deapod
        kgrid = np.fft.fft2(padded).reshape(-1, self.Gy * self.Gx)
        out = (self.interp @ kgrid.T).T
        return out.reshape(lead + (len(self.coords),))

    def adjoint(self, samples: np.ndarray) -> np.ndarray:
        samples = np.asarray(samples, dtype=np.complex128)
        lead = samples.shape[:-1]
        if samples.shape[-1] != len(self.coords):
            raise ValueError(f"expected {len(self.coords)} samples, got {samples.shape[-1]}")
        flat = samples.reshape(-1, len(self.coords))
        kgrid = (self.interp_h @ flat.T).T.reshape(lead + (self.Gy, self.Gx))
        padded = np.fft.ifft2(kgrid, norm="forward")
        return padded[..., self._rows[:, None], self._cols[None, :]] / self.deapod


def _as_plane(img2d):
    img2d = np.asarray(img2d)
    if img2d.ndim == 3:
        if img2d.shape[2] != 1:
            raise ValueError(f"expected a single-phase image, got {img2d.shape}")
        img2d = img2d[:, :, 0]
    if img2d.ndim != 2:
        raise ValueError(f"expected an (H, W) or (H, W, 1) image, got {img2d.shape}")
    return img2d


def nufft_forward(img2d, coords, cfg: NufftConfig | None = None) -> np.ndarray:
    """Nonuniform Fourier samples of a single 2D image at ``coords (M, 2)``."""
    img2d = _as_plane(img2d)
    return NufftPlan(coords, *img2d.shape, cfg).forward(img2d)


def nufft_adjoint(samples, coords, H: int, W: int, cfg: NufftConfig | None = None) -> np.ndarray:
    """Exact adjoint of :func:`nufft_forward`; returns an ``(H, W, 1)`` image."""
    return NufftPlan(coords, H, W, cfg).adjoint(samples)[:, :, None]


def direct_ndft(img2d, coords) -> np.ndarray:
    """Brute-force O(N M) nonuniform DFT used as a reference."""
    img2d = _as_plane(img2d)
    H, W = img2d.shape
    ry = np.arange(H)[:, None] - H // 2
    rx = np.arange(W)[None, :] - W // 2
    coords = np.asarray(coords, dtype=np.float64)
    out = np.empty(len(coords), dtype=np.complex128)
    for j, (kx, ky) in enumerate(coords):
        out[j] = np.sum(img2d * np.exp(-2j * np.pi * (ky * ry + kx * rx)))
    return out


@dataclass
class Trajectory:
    """Per-phase k-space coordinates with density-compensation weights.

    Attributes
    ----------
    coords : np.ndarray
        ``(T, M, 2)`` array of ``(kx, ky)`` in ``[-0.5, 0.5)``.
    dcf : np.ndarray
        ``(T, M)`` nonnegative weights.
    angles : np.ndarray or None
        ``(T, spokes)`` spoke angles in radians, when known.
    samples_per_spoke : int or None
    """

    coords: np.ndarray
    dcf: np.ndarray
    angles: np.ndarray | None = None
    samples_per_spoke: int | None = None
    _plans: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.dcf = np.asarray(self.dcf, dtype=np.float64)
        if self.coords.ndim != 3 or self.coords.shape[2] != 2:
            raise ValueError(f"coords must have shape (T, M, 2), got {self.coords.shape}")
        if self.dcf.shape != self.coords.shape[:2]:
            raise ValueError(f"dcf shape {self.dcf.shape} does not match coords {self.coords.shape[:2]}")
        if np.any(self.coords < -0.5) or np.any(self.coords >= 0.5):
            raise ValueError("k-space coordinates must lie in [-0.5, 0.5)")
        if np.any(self.dcf < 0):
            raise ValueError("density compensation weights must be nonnegative")

    @property
    def n_phases(self) -> int:
        return self.coords.shape[0]

    @property
    def n_samples(self) -> int:
        return self.coords.shape[1]

    def plan(self, t: int, H: int, W: int, cfg: NufftConfig) -> NufftPlan:
        key = (t, H, W, cfg)
        if key not in self._plans:
            self._plans[key] = NufftPlan(self.coords[t], H, W, cfg)
        return self._plans[key]


def make_radial_trajectory(H: int, spokes_per_phase: int, T: int = 1, scheme: str = "golden_angle") -> Trajectory:
    """Radial spokes through the k-space origin with ``2*H`` samples each.

    ``golden_angle`` advances every spoke by :data:`GOLDEN_ANGLE` counting
    across phases; ``uniform`` uses ``pi * s / spokes_per_phase`` in every
    phase. Density compensation is the radial ramp ``pi |k| dk / spokes``
    with the DC sample at a quarter of the first-ring weight, so the DC
    samples of all spokes together cover the central disk of radius ``dk/2``.
    """
    if spokes_per_phase < 1 or T < 1 or H < 2:
        raise ValueError(f"need H >= 2, spokes_per_phase >= 1, T >= 1; got {H}, {spokes_per_phase}, {T}")
    n = 2 * H
    if scheme == "golden_angle":
        idx = np.arange(T * spokes_per_phase).reshape(T, spokes_per_phase)
        angles = np.mod(idx * GOLDEN_ANGLE, np.pi)
    elif scheme == "uniform":
        angles = np.tile(np.pi * np.arange(spokes_per_phase) / spokes_per_phase, (T, 1))
    else:
        raise ValueError(f"unknown trajectory scheme {scheme!r}")
    dk = 1.0 / n
    radius = (np.arange(n) - H) * dk
    kx = radius[None, None, :] * np.cos(angles)[:, :, None]
    ky = radius[None, None, :] * np.sin(angles)[:, :, None]
    coords = np.stack([kx, ky], axis=-1).reshape(T, spokes_per_phase * n, 2)
    coords = np.minimum(coords.astype(np.float32), _KMAX).astype(np.float64)

    ramp = np.pi * np.abs(radius) * dk / spokes_per_phase
    ramp[H] = 0.25 * np.pi * dk * dk / spokes_per_phase
    dcf = np.tile(ramp, (T, spokes_per_phase)).astype(np.float32).astype(np.float64)
    return Trajectory(coords, dcf, angles, n)


def _check_operands(x_shape, S, traj, M=None):
    H, W, T = x_shape
    if S.shape[1:] != (H, W):
        raise ValueError(f"coil map spatial shape {S.shape[1:]} does not match image ({H}, {W}) "
                         "along the row/column axes")
    if traj.n_phases != T:
        raise ValueError(f"phase axis mismatch: image has T={T}, trajectory has {traj.n_phases}")
    if M is not None and M != traj.n_samples:
        raise ValueError(f"sample axis mismatch: data has M={M}, trajectory has {traj.n_samples}")


def _check_kspace(y, S, traj):
    y = np.asarray(y)
    if y.ndim != 3:
        raise ValueError(f"k-space data must have shape (C, T, M), got {y.shape}")
    if y.shape[0] != S.shape[0]:
        raise ValueError(f"coil axis mismatch: data has C={y.shape[0]}, maps have {S.shape[0]}")
    if y.shape[1] != traj.n_phases:
        raise ValueError(f"phase axis mismatch: data has T={y.shape[1]}, trajectory has {traj.n_phases}")
    if y.shape[2] != traj.n_samples:
        raise ValueError(f"sample axis mismatch: data has M={y.shape[2]}, trajectory has {traj.n_samples}")
    return y.astype(np.complex128, copy=False)


def apply_H(x, S, traj: Trajectory, cfg: NufftConfig | None = None) -> np.ndarray:
    """Forward operator: image ``(H, W, T)`` to k-space ``(C, T, M)``."""
    cfg = cfg or NufftConfig()
    x = check_image(x, "x")
    S = check_coils(S)
    _check_operands(x.shape, S, traj)
    H, W, T = x.shape
    y = np.empty((S.shape[0], T, traj.n_samples), dtype=np.complex128)
    for t in range(T):
        y[:, t] = traj.plan(t, H, W, cfg).forward(S * x[None, :, :, t])
    return y


def apply_H_adjoint(y, S, traj: Trajectory, cfg: NufftConfig | None = None, weights=None) -> np.ndarray:
    """Adjoint operator: k-space ``(C, T, M)`` to image ``(H, W, T)``.

    ``weights`` (shape ``(T, M)``) multiplies the samples first; it is only
    used for density-compensated backprojection.
    """
    cfg = cfg or NufftConfig()
    S = check_coils(S)
    y = _check_kspace(y, S, traj)
    C, T, _ = y.shape
    H, W = S.shape[1:]
    x = np.empty((H, W, T), dtype=np.complex128)
    for t in range(T):
        yt = y[:, t] if weights is None else y[:, t] * weights[t]
        per_coil = np.conj(S) * traj.plan(t, H, W, cfg).adjoint(yt)
        acc = per_coil[0].copy()
        for i in range(1, C):
            acc += per_coil[i]
        x[:, :, t] = acc
    return x


def datafit(x, y, S, traj, cfg=None) -> float:
    """Least-squares data fit ``0.5 * ||H x - y||^2``."""
    r = apply_H(x, S, traj, cfg) - _check_kspace(y, check_coils(S), traj)
    return 0.5 * float(np.vdot(r, r).real)


def grad_datafit(x, y, S, traj, cfg=None) -> np.ndarray:
    """Gradient ``H^H (H x - y)`` of :func:`datafit` (Wirtinger convention)."""
    S = check_coils(S)
    y = _check_kspace(y, S, traj)
    return apply_H_adjoint(apply_H(x, S, traj, cfg) - y, S, traj, cfg)


def hamming_weights(traj: Trajectory) -> np.ndarray:
    """Radial Hamming apodization ``0.54 + 0.46 cos(pi |k| / 0.5)``."""
    r = np.hypot(traj.coords[..., 0], traj.coords[..., 1])
    return 0.54 + 0.46 * np.cos(np.pi * np.minimum(r / 0.5, 1.0))


def zero_filled_recon(y, S, traj: Trajectory, cfg=None, hamming: bool = False) -> np.ndarray:
    """Density-compensated coil-combined backprojection.

    Normalizes by the pixelwise coil sum-of-squares; pixels outside the
    inscribed circle with no coil sensitivity are left at zero.
    """
    S = check_coils(S)
    weights = traj.dcf * hamming_weights(traj) if hamming else traj.dcf
    x = apply_H_adjoint(y, S, traj, cfg, weights=weights)
    sos = np.sum(np.abs(S) ** 2, axis=0)
    if np.any(sos[support_mask(*sos.shape)] == 0):
        raise ValueError("coil sum-of-squares vanishes inside the field-of-view support")
    safe = np.where(sos > 0, sos, 1.0)
    return np.where(sos[:, :, None] > 0, x / safe[:, :, None], 0.0)


def simulate_measurement(x_true, S, traj, cfg=None, noise_sigma: float = 0.0, seed: int = 0) -> np.ndarray:
    """``y = H x + e`` with complex Gaussian noise of std ``noise_sigma`` per component."""
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    y = apply_H(x_true, S, traj, cfg)
    if noise_sigma == 0:
        return y
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
    return y + noise_sigma * noise
