"""Command-line front end: simulate, train, reconstruct, evaluate.

Every knob lives in one plain-text ``key=value`` file (``--config``), with
``--set key=value`` and the dedicated flags taking precedence. Subject data
is stored under ``<data_dir>/subject_<seed>/``.

Exit codes: 0 success, 1 I/O or file-format error, 2 invalid configuration
or inconsistent inputs, 3 numerical divergence.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .denoiser import Architecture, denoise_image, init_model, load_model, save_model
from .exceptions import DivergenceError, FormatError
from .formats import (load_coils, load_image, load_kspace, load_trajectory_arrays, save_coils, save_image,
                      save_kspace, save_trajectory_arrays)
from .forward_model import NufftConfig, Trajectory, make_radial_trajectory, simulate_measurement, zero_filled_recon
from .grid import PhantomSpec, make_coil_maps, make_phantom
from .metrics import psnr
from .pnp_solver import SolverConfig, reconstruct
from .trainer import TrainConfig, build_training_set, train

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2, 3
MODES = ("zero_filled", "denoiser_only", "pnp")

_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _bool(s: str) -> bool:
    try:
        return _BOOL[s.strip().lower()]
    except KeyError:
        raise ValueError(f"not a boolean: {s!r}") from None


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none", "auto") else float(s)


def _seed_list(s: str) -> tuple:
    """Parse ``"1-8"`` or ``"1,2,5"`` (or a mix) into a tuple of ints."""
    out = []
    for part in s.replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


# key -> (default, parser, help)
DEFAULTS = {
    "phantom": ("ellipse_dynamic", str, "phantom kind: ellipse_dynamic or shepp_logan"),
    "size": (64, int, "image rows and columns"),
    "phases": (4, int, "respiratory phases T"),
    "motion_amplitude": (0.1, float, "moving-structure shift over the cycle, fraction of H"),
    "coils": (4, int, "receiver coils"),
    "spokes_per_phase": (16, int, "radial spokes per phase"),
    "scheme": ("golden_angle", str, "spoke ordering: golden_angle or uniform"),
    "noise_sigma": (0.01, float, "complex k-space noise std per real component"),
    "oversampling": (2.0, float, "NUFFT grid oversampling"),
    "kernel_width": (4, int, "Kaiser-Bessel kernel width in grid cells"),
    "kernel_beta": (None, _opt_float, "Kaiser-Bessel shape; none = standard value for width/oversampling"),
    "hamming": (False, _bool, "Hamming apodization in zero-filled reconstructions"),
    "data_dir": ("data", str, "directory holding subject_<seed>/ folders"),
    "train_subjects": ((1, 2, 3, 4, 5, 6, 7, 8), _seed_list, "training subject seeds, e.g. 1-8"),
    "epochs": (TrainConfig.epochs, int, "training epochs"),
    "batch_size": (TrainConfig.batch_size, int, "training mini-batch size"),
    "lr": (TrainConfig.lr, float, "optimizer step size"),
    "optimizer": (TrainConfig.optimizer, str, "adam or sgd"),
    "loss": (TrainConfig.loss, str, "l2 or l1"),
    "factor_n": (TrainConfig.factor_n, int, "downsampling factor n"),
    "train_seed": (TrainConfig.seed, int, "seed for weight init and shuffling"),
    "levels": (2, int, "UNet levels"),
    "base_channels": (16, int, "UNet channels at the first level"),
    "model": ("model.msn", str, "denoiser file (train output, reconstruct input)"),
    "gamma": (None, _opt_float, "PnP step size; none = 1/L by power iteration"),
    "max_iters": (SolverConfig.max_iters, int, "PnP iteration budget"),
    "accelerate": (SolverConfig.accelerate, _bool, "Nesterov acceleration"),
    "tol": (SolverConfig.tol, float, "stop when relative change falls below this"),
}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=lambda: {k: v[0] for k, v in DEFAULTS.items()})

    def __getitem__(self, key):
        return self.values[key]

    def set(self, key: str, raw: str) -> None:
        if key not in DEFAULTS:
            raise ValueError(f"unknown config key {key!r}")
        try:
            self.values[key] = DEFAULTS[key][1](raw)
        except ValueError as exc:
            raise ValueError(f"bad value for {key}: {exc}") from None

    @classmethod
    def from_file(cls, path) -> ExperimentConfig:
        cfg = cls()
        for n, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{n}: expected key=value, got {line!r}")
            key, raw = (s.strip() for s in line.split("=", 1))
            cfg.set(key, raw)
        return cfg

    def phantom_spec(self, seed: int) -> PhantomSpec:
        return PhantomSpec(self["phantom"], self["size"], self["size"], self["phases"],
                           self["motion_amplitude"], seed)

    def nufft(self) -> NufftConfig:
        return NufftConfig(self["oversampling"], self["kernel_width"], self["kernel_beta"])

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self["epochs"], batch_size=self["batch_size"], lr=self["lr"],
                           optimizer=self["optimizer"], loss=self["loss"], factor_n=self["factor_n"],
                           seed=self["train_seed"], subjects=self["train_subjects"])

    def solver_config(self) -> SolverConfig:
        return SolverConfig(gamma=self["gamma"], max_iters=self["max_iters"], accelerate=self["accelerate"],
                            tol=self["tol"])

    def subject_dir(self, seed: int) -> Path:
        return Path(self["data_dir"]) / f"subject_{seed}"


def undersampling_factor(H: int, spokes: int) -> float:
    """Nyquist spoke count ``ceil(pi/2 * H)`` over the acquired spokes."""
    return math.ceil(math.pi / 2 * H) / spokes


def _need(path: Path) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"missing input file: {path}")
    return path


def load_subject(cfg: ExperimentConfig, seed: int):
    """Read ``(y, S, traj)`` for one subject directory."""
    d = cfg.subject_dir(seed)
    y = load_kspace(_need(d / "kspace.ksp"))
    S = load_coils(_need(d / "coils.coil"))
    coords, dcf = load_trajectory_arrays(_need(d / "traj.trj"))
    return y, S, Trajectory(coords, dcf)


def cmd_simulate(cfg: ExperimentConfig, seed: int, out=None) -> Path:
    d = Path(out) if out else cfg.subject_dir(seed)
    spec = cfg.phantom_spec(seed)
    x = make_phantom(spec)
    S = make_coil_maps(spec.H, spec.W, cfg["coils"])
    traj = make_radial_trajectory(spec.H, cfg["spokes_per_phase"], spec.T, cfg["scheme"])
    y = simulate_measurement(x, S, traj, cfg.nufft(), cfg["noise_sigma"], seed=seed)
    d.mkdir(parents=True, exist_ok=True)
    save_kspace(d / "kspace.ksp", y)
    save_trajectory_arrays(d / "traj.trj", traj.coords, traj.dcf)
    save_coils(d / "coils.coil", S)
    save_image(d / "truth.cimg", x)
    print(f"wrote {d}")
    print(f"samples per phase: {traj.n_samples}")
    print(f"undersampling factor: {undersampling_factor(spec.H, cfg['spokes_per_phase']):.4f}")
    return d


def cmd_train(cfg: ExperimentConfig, seed=None, out=None) -> Path:
    tc = cfg.train_config()
    if seed is not None:
        tc = TrainConfig(**{**tc.__dict__, "seed": seed})
    if not tc.subjects:
        raise ValueError("train_subjects is empty")
    nufft = cfg.nufft()
    images = []
    for s in tc.subjects:
        y, S, traj = load_subject(cfg, s)
        images.append(zero_filled_recon(y, S, traj, nufft, hamming=cfg["hamming"]))
    T = images[0].shape[2]
    pairs = build_training_set(images, tc.factor_n)
    model0 = init_model(Architecture(cfg["levels"], cfg["base_channels"], T), tc.seed)
    model, report = train(model0, pairs, tc)
    report.subject_scales = [float(abs(img).max()) for img in images]
    path = Path(out or cfg["model"])
    path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, path)
    log = path.with_suffix(".log")
    log.write_text(report.log_text())
    print(f"training pairs: {report.n_pairs}")
    print(f"final loss: {report.final_loss:.6g}")
    print(f"wrote {path} and {log}")
    return path


def cmd_reconstruct(cfg: ExperimentConfig, seed: int, mode: str, out=None) -> Path:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    y, S, traj = load_subject(cfg, seed)
    nufft = cfg.nufft()
    model = None if mode == "zero_filled" else load_model(_need(Path(cfg["model"])))
    path = Path(out or cfg.subject_dir(seed) / f"recon_{mode}.cimg")
    trace = None
    if mode == "pnp":
        x, trace = reconstruct(y, S, traj, nufft, model, cfg.solver_config())
    else:
        x = zero_filled_recon(y, S, traj, nufft, hamming=cfg["hamming"])
        if mode == "denoiser_only":
            x = denoise_image(model, x)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_image(path, x)
    print(f"wrote {path}")
    if trace is not None:
        tpath = path.with_suffix(".trace")
        tpath.write_text(trace.text())
        print(f"iterations: {len(trace)}  gamma: {trace.gamma:.6g}")
        print(f"wrote {tpath}")
    return path


def cmd_evaluate(result, reference) -> None:
    x = load_image(_need(Path(result)))
    ref = load_image(_need(Path(reference)))
    rep = psnr(x, ref)
    print(f"psnr_db {rep.psnr_db:.6f}")
    print(f"mse {rep.mse:.6e}")
    print("per_phase_db " + " ".join(f"{v:.6f}" for v in rep.per_phase_db))


def build_parser() -> argparse.ArgumentParser:
    keys = "\n".join(f"  {f'{k} = {v[0]!r}':<44} {v[2]}" for k, v in DEFAULTS.items())
    p = argparse.ArgumentParser(
        prog="msmri", formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Self-supervised plug-and-play reconstruction of dynamic radial MRI (synthetic phantoms).",
        epilog=f"config keys (defaults):\n{keys}\n\nexit codes: 0 ok, 1 I/O or format, 2 invalid input, 3 diverged")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value configuration file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
        sp.add_argument("--threads", type=int, help="cap BLAS threads")

    s = sub.add_parser("simulate", help="write k-space, trajectory, coils and ground truth for one subject")
    common(s)
    s.add_argument("--seed", type=int, default=0, help="subject seed (default 0)")
    s.add_argument("--out", help="output directory (default <data_dir>/subject_<seed>)")

    t = sub.add_parser("train", help="train the denoiser on zero-filled training subjects")
    common(t)
    t.add_argument("--seed", type=int, help="init/shuffle seed (default: train_seed)")
    t.add_argument("--out", help="model path (default: model key); the loss log goes next to it as .log")

    r = sub.add_parser("reconstruct", help="reconstruct one subject")
    common(r)
    r.add_argument("--seed", type=int, default=0, help="subject seed (default 0)")
    r.add_argument("--mode", choices=MODES, default="pnp")
    r.add_argument("--out", help="output .cimg (default <subject>/recon_<mode>.cimg); pnp trace goes to .trace")

    e = sub.add_parser("evaluate", help="PSNR of a reconstruction against a reference")
    e.add_argument("result")
    e.add_argument("reference")
    e.add_argument("--threads", type=int, help="cap BLAS threads")
    return p


def _run(args) -> None:
    if args.command == "evaluate":
        cmd_evaluate(args.result, args.reference)
        return
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    for item in args.set:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        cfg.set(key.strip(), raw.strip())
    if args.command == "simulate":
        cmd_simulate(cfg, args.seed, args.out)
    elif args.command == "train":
        cmd_train(cfg, args.seed, args.out)
    else:
        cmd_reconstruct(cfg, args.seed, args.mode, args.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=args.threads):
                _run(args)
        else:
            _run(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
