"""Exception types shared across the package."""


class MagspecError(Exception):
    """Base class for all magspec errors."""


class FieldError(MagspecError):
    """Invalid field data or field configuration."""


class AmbiguousRankError(FieldError):
    """The rank tolerance straddles a true singular value of B(x0).

    Raised instead of silently guessing whether a near-zero singular value
    is a zero mode or a genuinely small field strength.
    """


class GaugeError(MagspecError):
    """Gauge construction failed (e.g. vector potential missing)."""


class GridError(MagspecError):
    """Invalid lattice grid specification."""


class SolverError(MagspecError):
    """Eigensolver failure or an invalid solver request."""


class ConfigError(MagspecError):
    """Configuration errors.  Collects every problem found, not just the first."""

    def __init__(self, problems):
        self.problems = [str(p) for p in problems]
        super().__init__("\n".join(self.problems))
