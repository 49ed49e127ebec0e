"""Exception types shared across the package.

Every numerical abort condition gets its own class so the CLI can map
failures onto exit codes without string matching.
"""


class KasnerLabError(Exception):
    """Base class for all package errors."""


class ConfigError(KasnerLabError):
    """Bad configuration value, malformed config file, or invalid override."""


class GridError(KasnerLabError):
    """Invalid grid construction or field/grid mismatch."""


class SymmetryError(KasnerLabError):
    """Tensor values violate their declared symmetry beyond rounding."""


class DegenerateExponentsError(KasnerLabError):
    """Exponent field touches a degenerate point (p2 = p3 or p3 = 1)."""


class NonIntegrableError(KasnerLabError):
    """Log-time quadrature tail fit detected non-integrable growth at t -> 0."""


class SingularFrameError(KasnerLabError):
    """Frame matrix not invertible at some grid point."""


class CflError(KasnerLabError):
    """Requested time step violates the CFL bound."""


class EnergyCeilingError(KasnerLabError):
    """Evolution remainder energy exceeded the configured t^N0 ceiling."""

    def __init__(self, message, t=None, growth_exponent=None):
        super().__init__(message)
        self.t = t
        self.growth_exponent = growth_exponent
