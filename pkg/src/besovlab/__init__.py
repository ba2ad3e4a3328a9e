"""Discrete Besov norms, condenser capacities and planar homeomorphisms."""

from ._accel import BACKEND, set_threads

__version__ = "0.1.0"
__all__ = ["BACKEND", "set_threads", "__version__"]
