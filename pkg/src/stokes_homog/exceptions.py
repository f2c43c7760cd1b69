class StokesHomogException(Exception):
    pass


class ValidationError(StokesHomogException):
    pass


class PresetError(ValidationError):
    pass


class EllipticityError(ValidationError):
    def __init__(self, message, alpha=None):
        super().__init__(message)
        self.alpha = alpha


class LatticeMismatchError(ValidationError):
    pass


class IncompatibleTrajectoryError(ValidationError):
    pass


class ConfigError(ValidationError):
    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class FieldDumpError(ValidationError):
    pass


class MissingArtifactError(ValidationError):
    pass


class SolverError(StokesHomogException):
    pass


class ConvergenceError(SolverError):
    def __init__(self, message, iterations=None, residuals=None):
        super().__init__(message)
        self.iterations = iterations
        self.residuals = list(residuals or [])


class SingularSystemError(SolverError):
    pass


class TensorError(SolverError):
    pass
