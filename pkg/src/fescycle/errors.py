"""Exception hierarchy shared by all fescycle modules."""


class FesCycleError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FesCycleError, ValueError):
    """Geometry or argument outside the domain of a closed-form expression."""


class SingularityError(FesCycleError, ArithmeticError):
    """Configuration too close to a kinematic singularity (sin q2 ~ 0)."""


class ModelError(FesCycleError, ValueError):
    """Muscle model violates its positivity/boundedness assumptions."""


class DegenerateForceError(FesCycleError, ArithmeticError):
    """The combined muscle force at the pedal has (near) zero magnitude."""


class DegeneratePairError(FesCycleError, ArithmeticError):
    """Neither member of a muscle-group pair can push the crank forward."""


class NoFeasiblePairError(FesCycleError, RuntimeError):
    """No admissible muscle-group pair yields a forward tangential force."""

    def __init__(self, q3, t=None):
        self.q3 = q3
        self.t = t
        where = f"crank angle {q3:.6f} rad"
        if t is not None:
            where += f" (t = {t:.6f} s)"
        super().__init__(f"no feasible muscle-group pair at {where}")


class ConfigError(FesCycleError, ValueError):
    """Invalid or unknown configuration entry."""
