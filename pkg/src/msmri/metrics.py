"""PSNR on magnitude images."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PSNR_CAP_DB = 99.0


@dataclass(frozen=True)
class MetricReport:
    psnr_db: float
    mse: float
    peak: float
    per_phase_db: tuple = ()

    def line(self) -> str:
        return f"{self.psnr_db!r} {self.mse!r} {self.peak!r}"


def _psnr_db(mse, peak):
    if mse == 0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(peak**2 / mse))


def psnr(x, ref) -> MetricReport:
    """PSNR of ``|x|`` against ``|ref|`` with the reference's peak magnitude.

    ``x`` and ``ref`` are ``(H, W, T)`` images; per-phase values reuse the
    global peak. A perfect match reports the 99 dB cap.
    """
    x, ref = np.asarray(x), np.asarray(ref)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs reference {ref.shape}")
    mag_ref = np.abs(ref)
    peak = float(mag_ref.max()) if mag_ref.size else 0.0
    if peak == 0:
        raise ValueError("reference is all zeros; PSNR peak is undefined")
    err = (np.abs(x) - mag_ref) ** 2
    mse = float(err.mean())
    per_phase = ()
    if err.ndim == 3:
        per_phase = tuple(float(_psnr_db(float(err[:, :, t].mean()), peak)) for t in range(err.shape[2]))
    return MetricReport(float(_psnr_db(mse, peak)), mse, peak, per_phase)
