"""Event-triggered variable-speed-limit control of the linearized ARZ model.

Simulation library and CLI for boundary control of a congested freeway
segment: backstepping kernels, six event-timing strategies (regular and
performance-barrier variants of continuous-time, periodic, and
self-triggered control), Lyapunov/barrier diagnostics, and traffic
performance metrics.
"""

from .errors import ArzEtcError, ConfigurationError, SimulationError, SolverError

__version__ = "0.1.0"

__all__ = ["ArzEtcError", "ConfigurationError", "SimulationError", "SolverError",
           "__version__"]
