from typing import Optional


class SocialRadarError(Exception):
    pass


class InvalidParameterError(SocialRadarError, ValueError):
    pass


class DimensionMismatchError(SocialRadarError, ValueError):
    pass


class AmbiguityOutOfClassError(InvalidParameterError):
    pass


class SingularSystemError(SocialRadarError, ArithmeticError):
    pass


class RankDeficientError(SocialRadarError, ValueError):
    def __init__(self, rank: int, expected: int, message: Optional[str] = None):
        self.rank = rank
        self.expected = expected
        super().__init__(
            message
            or f"Matrix is rank deficient: numerical rank {rank}, expected {expected}"
        )


class InstanceTooLargeError(SocialRadarError, ValueError):
    pass


class InfeasibleProblemError(SocialRadarError, ValueError):
    pass


class DivergenceError(SocialRadarError, ArithmeticError):
    pass


class NoSolutionError(SocialRadarError, ValueError):
    pass


class MissingSamplesError(SocialRadarError, ValueError):
    pass


class ConfigError(SocialRadarError, ValueError):
    pass
