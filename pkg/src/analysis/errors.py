class PLeaderError(ValueError):
    """Base class for every error raised by the analysis and simulation code."""


class ParameterError(PLeaderError):
    """A parameter lies outside its domain. The message names the violated constraint."""


class DegenerateMomentSystemError(PLeaderError):
    pass


class NonConvergentQuadratureError(PLeaderError):
    pass


class ResolutionError(PLeaderError):
    """A requested scale is too fine for the sampling step of the signal."""

    def __init__(self, message: str, scale: float):
        super().__init__(message)
        self.scale = scale


class CoverageError(PLeaderError):
    """A time-scale region is not covered by the plane (positions, scales or dyadic depth)."""


class InsufficientScalesError(PLeaderError):
    pass


class SpectrumHypothesisError(ParameterError):
    pass


class ConfigError(PLeaderError):
    pass
