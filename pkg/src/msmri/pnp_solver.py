"""Accelerated plug-and-play reconstruction with a learned denoiser.

Each iteration takes a gradient step on ``g(x) = 0.5 ||H x - y||^2`` from the
extrapolated point ``s``, feeds the result through the denoiser, and updates
the Nesterov momentum::

    z   = s_{k-1} - gamma * H^H (H s_{k-1} - y)
    x_k = D(z)
    q_k = (1 + sqrt(1 + 4 q_{k-1}^2)) / 2
    s_k = x_k + (q_{k-1} - 1) / q_k * (x_k - x_{k-1})

With ``q_k = 1`` throughout the momentum term vanishes and the iteration is
plain PnP. The denoiser carries no convergence guarantee; non-finite iterates
raise :class:`~msmri.exceptions.DivergenceError`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .denoiser import DenoiserModel, denoise_image
from .exceptions import DivergenceError
from .forward_model import apply_H, apply_H_adjoint, grad_datafit, zero_filled_recon
from .grid import check_coils


@dataclass(frozen=True)
class SolverConfig:
    gamma: float | None = None  # None -> 1 / L from power iteration
    max_iters: int = 100
    accelerate: bool = True
    tol: float = 1e-6
    record_trace: bool = True

    def __post_init__(self):
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol < 0:
            raise ValueError(f"tol must be >= 0, got {self.tol}")


@dataclass
class SolverTrace:
    rel_change: list = field(default_factory=list)
    datafit: list = field(default_factory=list)
    q: list = field(default_factory=list)
    gamma: float = float("nan")

    def __len__(self):
        return len(self.rel_change)

    def text(self) -> str:
        rows = zip(range(1, len(self) + 1), self.rel_change, self.datafit, self.q)
        return "".join(f"{k}\t{r:.17g}\t{g:.17g}\t{q:.17g}\n" for k, r, g, q in rows)


def nesterov_seq(k_max: int) -> list:
    """``[q_0, ..., q_{k_max}]`` with ``q_0 = 1``."""
    q = [1.0]
    for _ in range(k_max):
        q.append(0.5 * (1.0 + math.sqrt(1.0 + 4.0 * q[-1] ** 2)))
    return q


def power_iteration_L(S, traj, cfg_nufft=None, iters: int = 100, seed: int = 0, rtol: float = 1e-6) -> float:
    """Largest eigenvalue of ``H^H H`` by power iteration from a seeded start.

    Stops early once the estimate changes by less than ``rtol`` relatively.
    """
    S = check_coils(S)
    H, W = S.shape[1:]
    rng = np.random.default_rng(seed)
    shape = (H, W, traj.n_phases)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = apply_H_adjoint(apply_H(v, S, traj, cfg_nufft), S, traj, cfg_nufft)
        new = float(np.vdot(v, w).real)
        v = w / np.linalg.norm(w)
        if lam and abs(new - lam) <= rtol * abs(new):
            return new
        lam = new
    return lam


def pnp_step(s, y, S, traj, cfg_nufft, gamma: float, model: DenoiserModel | None):
    """One gradient step on the data fit followed by the denoiser.

    ``model=None`` stands for the identity denoiser.
    """
    z = s - gamma * grad_datafit(s, y, S, traj, cfg_nufft)
    return z if model is None else denoise_image(model, z)


def _datafit_value(x, y, S, traj, cfg):
    r = apply_H(x, S, traj, cfg) - y
    return 0.5 * float(np.vdot(r, r).real)


def reconstruct(y, S, traj, cfg_nufft, model: DenoiserModel | None, solver_cfg: SolverConfig = SolverConfig(),
                x0=None):
    """Run accelerated PnP from the zero-filled image.

    Returns the last iterate and a :class:`SolverTrace` with one entry per
    executed iteration. ``model=None`` uses the identity denoiser, which turns
    the method into (accelerated) gradient descent on the data fit.
    """
    S = check_coils(S)
    gamma = solver_cfg.gamma
    if gamma is None:
        gamma = 1.0 / power_iteration_L(S, traj, cfg_nufft)
    x_prev = zero_filled_recon(y, S, traj, cfg_nufft) if x0 is None else np.asarray(x0, dtype=np.complex128)
    s = x_prev
    qs = nesterov_seq(solver_cfg.max_iters) if solver_cfg.accelerate else [1.0] * (solver_cfg.max_iters + 1)
    trace = SolverTrace(gamma=gamma)
    x = x_prev
    for k in range(1, solver_cfg.max_iters + 1):
        # overflow shows up as a non-finite iterate and is reported below
        with np.errstate(over="ignore", invalid="ignore"):
            x = pnp_step(s, y, S, traj, cfg_nufft, gamma, model)
            beta = (qs[k - 1] - 1.0) / qs[k]
            s = x + beta * (x - x_prev) if beta != 0 else x
            denom = np.linalg.norm(x_prev)
            change = float(np.linalg.norm(x - x_prev) / denom) if denom > 0 else float(np.linalg.norm(x))
        if not (np.all(np.isfinite(x)) and np.isfinite(change)):
            raise DivergenceError(f"non-finite iterate at iteration {k}; gamma={gamma:g} may be too large", step=k)
        trace.rel_change.append(change)
        trace.q.append(qs[k])
        if solver_cfg.record_trace:
            trace.datafit.append(_datafit_value(x, y, S, traj, cfg_nufft))
        else:
            trace.datafit.append(float("nan"))
        x_prev = x
        if change < solver_cfg.tol:
            break
    return x, trace
