"""Exception types shared across the package."""


class ArzEtcError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ArzEtcError):
    """Invalid parameters or a violated parameter-selection inequality."""


class SolverError(ArzEtcError):
    """Kernel solver failed to converge or certify its tables."""


class SimulationError(ArzEtcError):
    """Closed-loop invariant breach or physical-bounds violation at runtime."""
