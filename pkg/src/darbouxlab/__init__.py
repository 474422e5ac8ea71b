"""darbouxlab: Darboux, Crum and strictly isospectral transformations of 1D Schrodinger operators.

Units are hbar = 2m = 1 throughout, so operators read ``-D^2 + u``.
"""

__version__ = "0.1.0"

from .errors import DarbouxLabError  # noqa: F401
