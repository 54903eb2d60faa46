"""Exception types shared across the package."""


class AttackGenError(Exception):
    """Base class for every error raised by attackgen."""


class ShapeError(AttackGenError, ValueError):
    pass


class NonFiniteError(AttackGenError, ArithmeticError):
    """A tensor operation produced NaN or Inf."""


class AccessDenied(AttackGenError, PermissionError):
    """The model handle's access level does not expose the requested quantity."""


class BudgetExhausted(AttackGenError, RuntimeError):
    pass


class TrainingDiverged(AttackGenError, ArithmeticError):
    pass


class CorruptFile(AttackGenError, ValueError):
    pass


class TruncatedFile(CorruptFile):
    pass


class InvalidDistribution(AttackGenError, ValueError):
    pass


class RepresentationMismatch(AttackGenError, TypeError):
    """A measure was paired with the wrong perturbation representation."""


class AllTargetClass(AttackGenError, ValueError):
    pass


class NoTargetPixels(AttackGenError, ValueError):
    pass


class InitFailure(AttackGenError, RuntimeError):
    pass


class ValidationError(AttackGenError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
