"""Lattice hyperparameter search: GP Bayesian optimization, COBYLA-style and
PSO baselines, and MSE/PSNR/SSIM image metrics."""

from ._hypertune import *  # noqa: F401,F403
from ._hypertune import __all__  # noqa: F401
