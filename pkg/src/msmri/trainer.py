"""Self-supervised training of the denoiser on stride-offset variant pairs.

Each subject contributes its zero-filled reconstruction; every ordered pair of
distinct downsampled variants becomes one (input, target) example and the
network is fit so that ``f(input)`` predicts ``target``. No clean image is
ever used.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .denoiser import DenoiserModel, backward, forward_with_cache, denoise_image, pack
from .downsampling import multiscale_downsample, training_pairs
from .exceptions import DivergenceError
from .metrics import MetricReport, psnr

OPTIMIZERS = ("sgd", "adam")
LOSSES = ("l2", "l1")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 8
    lr: float = 1e-3
    optimizer: str = "adam"
    loss: str = "l2"
    factor_n: int = 2
    seed: int = 0
    subjects: tuple = ()
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.factor_n < 2:
            raise ValueError(f"factor_n must be >= 2, got {self.factor_n}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")


@dataclass
class TrainReport:
    epoch_losses: list
    wall_time: float
    checksum: str
    n_pairs: int
    subject_scales: list = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1]

    def log_text(self) -> str:
        lines = [f"# training pairs: {self.n_pairs}", f"# model checksum: {self.checksum}"]
        if self.subject_scales:
            lines.append("# subject scales: " + " ".join(f"{s:.17g}" for s in self.subject_scales))
        lines += [f"{i + 1}\t{loss:.17g}" for i, loss in enumerate(self.epoch_losses)]
        return "\n".join(lines) + "\n"


def build_training_set(subjects, factor_n: int = 2):
    """Concatenate variant pairs over all zero-filled subject images."""
    subjects = list(subjects)
    if not subjects:
        raise ValueError("need at least one training subject")
    pairs = []
    for img in subjects:
        pairs.extend(training_pairs(multiscale_downsample(img, factor_n)))
    return pairs


def _loss_and_grad(out, target, kind):
    """Per-example losses and the gradient of their batch mean."""
    diff = out - target
    if kind == "l2":
        per = np.mean(diff**2, axis=(1, 2, 3))
        return per, 2.0 * diff / diff.size
    return np.mean(np.abs(diff), axis=(1, 2, 3)), np.sign(diff) / diff.size


def _update(params, grads, m1, m2, step, cfg):
    for p, g, a, v in zip(params, grads, m1, m2):
        if cfg.optimizer == "adam":
            a *= cfg.beta1
            a += (1 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1 - cfg.beta2) * g * g
            ahat = a / (1 - cfg.beta1**step)
            vhat = v / (1 - cfg.beta2**step)
            p -= cfg.lr * ahat / (np.sqrt(vhat) + cfg.eps)
        else:
            p -= cfg.lr * g
        p[...] = p.astype(np.float32)


def train(model: DenoiserModel, pairs, cfg: TrainConfig = TrainConfig()):
    """Mini-batch minimization of the variant-to-variant loss.

    Pairs are shuffled with a generator seeded by ``cfg.seed``; updates are
    applied in batch order, so the result is deterministic. Parameters are
    kept on the float32 grid after every update.

    Returns
    -------
    (DenoiserModel, TrainReport)
    """
    if not pairs:
        raise ValueError("training set is empty")
    start = time.perf_counter()
    model = model.copy()
    inputs = np.stack([pack(a) for a, _ in pairs])
    targets = np.stack([pack(b) for _, b in pairs])
    if inputs.shape != targets.shape:
        raise ValueError("input and target tensors differ in shape")

    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    step = 0
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        # per-pair losses summed in pair order, so the epoch mean does not depend on the shuffle
        per_pair = np.empty(len(pairs))
        for b, lo in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            x, y = inputs[idx], targets[idx]
            with np.errstate(over="ignore", invalid="ignore"):
                out, cache = forward_with_cache(model, x)
                loss, g_out = _loss_and_grad(out, y, cfg.loss)
            if not np.all(np.isfinite(loss)):
                raise DivergenceError(f"non-finite loss at epoch {epoch + 1}, batch {b + 1}",
                                      step=(epoch + 1, b + 1))
            per_pair[idx] = loss
            grads, _ = backward(model, x, g_out, cache)
            step += 1
            if cfg.lr == 0:
                continue
            with np.errstate(over="ignore", invalid="ignore"):
                _update(params, grads, m1, m2, step, cfg)
        losses.append(float(per_pair.mean()))
    report = TrainReport(losses, time.perf_counter() - start, model.checksum(), len(pairs))
    return model, report


def evaluate_denoiser(model: DenoiserModel, zero_filled, truth) -> MetricReport:
    """PSNR of the denoised validation image against the simulated ground truth."""
    return psnr(denoise_image(model, zero_filled), truth)
