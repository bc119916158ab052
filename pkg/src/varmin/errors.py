"""Exception hierarchy shared by all varmin modules."""


class VarminError(Exception):
    """Base class for every error raised by the library."""


class ModelEvaluationError(VarminError):
    """A Lagrangian or terminal cost returned non-finite values."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ModelDefinitionError(VarminError):
    """A model is structurally broken (e.g. asymmetric velocity Hessian)."""


class CatalogLookupError(VarminError, KeyError):
    """Unknown catalog entry or invalid catalog parameters."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ConditionViolationError(VarminError):
    """A standing assumption (convexity in velocity) fails at a point."""


class ConjugateSolveError(VarminError):
    """Newton iteration for the Legendre transform did not converge."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class ContractError(VarminError, ValueError):
    """Inputs violate an operation's preconditions."""


class CompletenessError(VarminError):
    """The Hamiltonian flow blew up during integration."""
