class ConfigError(ValueError):
    """Invalid parameters; raised before any numerical work starts."""


class NumericalError(RuntimeError):
    pass


class SingularJacobianError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass
