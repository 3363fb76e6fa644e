"""Exception types shared across the package."""


class PhtrackError(Exception):
    """Base class for all errors raised by this package."""


class ModelError(PhtrackError):
    """A system definition violates a structural requirement
    (non-symmetric inertia, rank-deficient input map, indefinite damping)."""


class DesignError(PhtrackError):
    """A controller design violates a structural requirement
    (wrong shapes, rank deficiency, a matrix that must be positive
    definite is not)."""


class MatchingError(PhtrackError):
    """A controller design fails its algebraic matching condition
    beyond tolerance."""


class CertificationError(PhtrackError):
    """A certificate gate failed where a passing certificate is required."""


class FeasibilityError(PhtrackError):
    """A reference trajectory fails its open-loop feasibility check."""


class SimulationError(PhtrackError):
    """Numerical failure during integration (non-finite values,
    state norm blow-up)."""


class ConfigError(PhtrackError):
    """A scenario configuration file is malformed or inconsistent."""
