"""Wireless networked control co-design simulator: AoI-aware scheduling,
GPR state prediction, and tail-based RL control over a shared uplink."""

from ._core import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
