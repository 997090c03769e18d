"""Contrastive discrete diffusion: Python bindings over the C++ core."""

from ._core import *  # noqa: F401,F403
from ._core import CdcdError, config, train, sample

__all__ = ["CdcdError", "config", "train", "sample"]
