"""Desk-scale simulator of a fiber-loop polarization-entangled pair source.

End-to-end chain: pump -> frequency doubling -> down-conversion -> noise
-> loss -> detection -> time tags, plus the analysis stack (coincidence
correlation, CAR, visibility, tomography, phase switching).
"""

from ._kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
__version__ = "0.1.0"
