"""
emf-sg: EMF exposure and SINR coverage in Poisson-Voronoi cellular networks
with truncated fractional uplink power control.
"""
__version__ = "0.1.0"

from .errors import ConfigError, ConvergenceError, DomainError  # noqa: E402
from .units import NetworkParams  # noqa: E402

__all__ = ["__version__", "ConfigError", "ConvergenceError", "DomainError", "NetworkParams"]
