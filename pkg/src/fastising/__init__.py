"""Fast approximations for the partition function and moments of large homogeneous Ising models."""

from importlib.metadata import PackageNotFoundError, version

from .errors import ConfigurationError, DataError, InputError, IsingError, NumericalDomainError
from .exact import brute_force, log_z_1nn
from .graph import Graph, GraphSpec, build
from .moments import MomentEstimate, expected_matches, m_phi, m_tilde_phi, s_phi, s_tilde_phi
from .partition import IsingParams, LogZEstimate, QuadConfig, log_z, log_z_h_phi, log_z_phi, log_z_tilde_phi

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DataError",
    "Graph",
    "GraphSpec",
    "InputError",
    "IsingError",
    "IsingParams",
    "LogZEstimate",
    "MomentEstimate",
    "NumericalDomainError",
    "QuadConfig",
    "brute_force",
    "build",
    "expected_matches",
    "log_z",
    "log_z_1nn",
    "log_z_h_phi",
    "log_z_phi",
    "log_z_tilde_phi",
    "m_phi",
    "m_tilde_phi",
    "s_phi",
    "s_tilde_phi",
]
