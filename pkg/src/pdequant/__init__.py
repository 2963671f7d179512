"""Homogeneous diffusion image compression with clustering-based grey value quantisation."""

from .diffusion import InfluenceBasis, InpaintProblem, influence_basis, inpaint, solve
from .imagegrid import ImageGrid, Mask, mse, read_pbm, read_pgm, write_pbm, write_pgm

__version__ = "0.1.0"

__all__ = [
    "ImageGrid",
    "InfluenceBasis",
    "InpaintProblem",
    "Mask",
    "influence_basis",
    "inpaint",
    "mse",
    "read_pbm",
    "read_pgm",
    "solve",
    "write_pbm",
    "write_pgm",
]
