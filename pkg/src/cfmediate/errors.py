"""Exception hierarchy shared across the package."""


class MediationError(Exception):
    """Base class for every error raised by cfmediate."""

    code = "mediation-error"

    def payload(self):
        return {"error": self.code, "message": str(self)}


class DataValidationError(MediationError, ValueError):
    """Observed data violates the dataset invariants."""

    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


class DomainError(MediationError, ValueError):
    code = "domain-error"


class SingularDesignError(MediationError, ValueError):
    """Design matrix is rank deficient; ``column`` names the first dependent column."""

    code = "singular-design"

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column

    def payload(self):
        return {**super().payload(), "column": self.column}


class SeparationError(MediationError):
    code = "separation"


class ConvergenceError(MediationError):
    code = "non-convergence"


class NotPSDError(MediationError, ValueError):
    code = "not-psd"


class CellSupportError(MediationError):
    code = "cell-support"


class InsufficientSupportError(MediationError):
    code = "insufficient-support"


class DegenerateGammaError(MediationError):
    code = "degenerate-gamma"


class UnstableBootstrapError(MediationError):
    code = "unstable-bootstrap"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def payload(self):
        return {**super().payload(), "diagnostics": self.diagnostics}


class ConfigError(MediationError, ValueError):
    code = "bad-config"
