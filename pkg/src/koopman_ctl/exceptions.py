from typing import Optional


class KoopmanCtlError(Exception):
    """Base class of every error raised by koopman_ctl."""
    code = 1

    def __init__(self, message: str, code: Optional[int] = None):
        self.message = message
        if code is not None:
            self.code = code
        super().__init__(message)

    def with_stage(self, stage: str) -> 'KoopmanCtlError':
        """Prefixes the message with the pipeline stage the error crossed."""
        self.message = f'{stage}: {self.message}'
        self.args = (self.message,)
        return self


class ConfigError(KoopmanCtlError):
    """Raised for invalid configuration or malformed artifacts."""
    code = 2


class InvalidSpec(ConfigError):
    pass


class InvalidReference(ConfigError):
    """Raised if a pose error curve cannot be normalized"""
    pass


class ArtifactParseError(ConfigError):
    def __init__(self, path: str, line: int, reason: str):
        self.path = path
        self.line = line
        super().__init__(f'{path}:{line}: {reason}')


class NumericalError(KoopmanCtlError):
    code = 3


class InvalidMatrix(NumericalError):
    pass


class NumericalFailure(NumericalError):
    pass


class DegenerateSpectrum(NumericalError):
    """Raised if the eigenvector matrix is too ill-conditioned to biorthonormalize"""
    def __init__(self, condition: float, cap: float):
        self.condition = condition
        self.cap = cap
        super().__init__(f'eigenvector matrix condition number {condition:.3e} exceeds cap {cap:.3e} '
                         f'(defective or near-defective matrix)')


class NoStabilizingSolution(NumericalError):
    def __init__(self, message: str, iterations: int = 0, spectral_radius: Optional[float] = None):
        self.iterations = iterations
        self.spectral_radius = spectral_radius
        super().__init__(message)


class IllConditionedBasis(NumericalError):
    pass


class SimulationDiverged(NumericalError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f'plant state became non-finite at sample {step}')


class InsufficientData(NumericalError):
    pass


class LiftOverflow(NumericalError):
    def __init__(self, sample: int, order: int):
        self.sample = sample
        self.order = order
        super().__init__(f'monomial lift of order {order} overflowed at sample {sample}')


class StaleArtifact(KoopmanCtlError):
    """Raised if an artifact was built from inputs that have since changed"""
    code = 4


def exit_code(error: BaseException) -> int:
    if isinstance(error, KoopmanCtlError):
        return error.code
    if isinstance(error, (FileNotFoundError, IsADirectoryError)):
        return ConfigError.code

    return 1
