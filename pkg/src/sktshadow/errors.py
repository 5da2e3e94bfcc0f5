"""Exception types raised across the package."""


class SKTError(Exception):
    """Base class for every numerical or configuration failure in sktshadow."""


class NonPositiveDenominator(SKTError):
    """The state lies outside the positive cone (a denominator of the change of variables vanished)."""


class ContextInvalid(SKTError):
    pass


class EpsilonZero(SKTError):
    pass


class RhsNotInRange(SKTError):
    pass


class OutOfBracket(SKTError):
    pass


class RatioNotAboveOne(SKTError):
    pass


class BracketFailure(SKTError):
    pass


class NonPositiveAmplitude(SKTError):
    pass


class DegenerateRoot(SKTError):
    pass


class SignViolation(SKTError):
    pass


class PositivityLoss(SKTError):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class NoConvergence(SKTError):
    def __init__(self, iterations, final_norm):
        super().__init__(f"Newton did not converge after {iterations} iterations (|F| = {final_norm:.3e})")
        self.iterations = iterations
        self.final_norm = final_norm


class BranchBroken(SKTError):
    def __init__(self, at_eps, reason=""):
        msg = f"continuation broke down at eps = {at_eps:.6g}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
        self.at_eps = at_eps


class NoRealEigenvalueNearTarget(SKTError):
    def __init__(self, window):
        super().__init__(f"no real eigenvalue in window [{window[0]:.4g}, {window[1]:.4g}]")
        self.window = window


class StepRejected(SKTError):
    pass


class NoGrowth(SKTError):
    pass


class MissingArtifacts(SKTError):
    pass


class ConfigError(SKTError):
    pass


class ComplexPairWarning(UserWarning):
    """The eigenvalues closest to the target form a complex-conjugate pair."""
