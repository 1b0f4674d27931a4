"""krylovlab: a laboratory for CG and GMRES convergence phenomena."""

from .precision import NATIVE, EXTENDED, PrecisionMode

__version__ = "0.1.0"

__all__ = ["NATIVE", "EXTENDED", "PrecisionMode", "__version__"]
