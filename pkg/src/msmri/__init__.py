"""Self-supervised plug-and-play reconstruction for undersampled dynamic radial MRI.

Submodules
----------
grid, formats
    Image containers, phantoms, coil maps and binary file formats.
forward_model
    NUFFT, radial trajectories and the multicoil operator.
downsampling
    Stride-offset variants used as self-supervised training pairs.
denoiser, trainer
    Numpy UNet with backpropagation and its training loop.
pnp_solver
    Accelerated plug-and-play iteration.
metrics
    PSNR on magnitude images.
cli
    ``msmri`` command-line front end.
"""
from .exceptions import DivergenceError, FormatError

__version__ = "0.1.0"
__all__ = ["DivergenceError", "FormatError"]
