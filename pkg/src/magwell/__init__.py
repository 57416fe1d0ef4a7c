"""Magnetic wells in two dimensions: classical guiding-center dynamics,
the semiclassical Birkhoff normal form and the magnetic Laplacian spectrum."""
from ._accel import HAS_NUMBA, backend

__version__ = "0.1.0"
__all__ = ["HAS_NUMBA", "backend", "__version__"]
