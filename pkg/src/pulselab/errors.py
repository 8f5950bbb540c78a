"""Exception hierarchy.

Domain errors mean the parameters sit outside the regime the model analysis
covers; numerical errors mean a solver or monitor broke down. The CLI maps
the two families to different exit codes.
"""


class PulselabError(Exception):
    """Base class for all package errors."""


class DomainError(PulselabError):
    """Parameters outside the bistable / positive-speed regime."""


class NumericalError(PulselabError):
    """A solver, quadrature or monitor failed."""


class ConfigError(PulselabError):
    """Invalid configuration or parameter file."""


class SchemaError(ConfigError):
    pass


class IoError(ConfigError):
    """Config file missing or unreadable."""


# kinetics


class SampleOutsideC(DomainError):
    def __init__(self, index, violations):
        self.index = index
        self.violations = violations
        super().__init__(f"sample {index} lies outside region C: {violations}")


# equilibria


class ConditionPViolated(DomainError):
    NO_POSITIVE_ROOTS = "NoPositiveRoots"
    WRONG_ROOT_COUNT = "WrongRootCount"
    WRONG_DERIVATIVE_SIGNS = "WrongDerivativeSigns"
    D_NON_NEGATIVE = "DNonNegative"

    def __init__(self, kind, detail=""):
        self.kind = kind
        msg = f"ConditionPViolated({kind})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class CoefficientMismatch(NumericalError):
    pass


class SignFlipAcrossTau(NumericalError):
    pass


class SearchExhausted(DomainError):
    pass


# homotopy


class InvalidGSpec(DomainError):
    pass


class GConstructionFailed(DomainError):
    pass


class SpeedSignLost(DomainError):
    def __init__(self, tau, c, detail=""):
        self.tau = tau
        self.c = c
        super().__init__(f"wave speed not positive at tau={tau:g} (c={c:.6g}) {detail}".strip())


class UpperSolutionViolated(NumericalError):
    def __init__(self, s, tau, component, value):
        self.s = s
        self.tau = tau
        self.component = component
        self.value = value
        super().__init__(
            f"F^tau(Psi(s))_{component} = {value:.3e} >= 0 at s={s:.6g}, tau={tau:g}"
        )


class ConditionZ1Violated(DomainError):
    pass


# waves


class CflViolation(ConfigError):
    pass


class NonFiniteState(NumericalError):
    pass


class FrontLeftDomain(NumericalError):
    pass


class NoFrontDetected(NumericalError):
    pass


# pulses


class NoPulse(DomainError):
    pass


class NoPulseExpected(DomainError):
    pass


class QuadratureFailure(NumericalError):
    pass


class ScalarPulseMissing(DomainError):
    pass


class LinearSolveFailure(NumericalError):
    pass


class CertificateFailed(NumericalError):
    pass


class NewtonDiverged(NumericalError):
    def __init__(self, tau, detail=""):
        self.tau = tau
        super().__init__(f"Newton continuation broke down at tau={tau:.6g} {detail}".strip())


class MonitorViolated(NumericalError):
    def __init__(self, kind, tau, detail=""):
        self.kind = kind
        self.tau = tau
        super().__init__(f"monitor {kind} violated at tau={tau:.6g} {detail}".strip())


class NearZeroEigenvalue(NumericalError):
    pass


# experiments


class Inconclusive(NumericalError):
    pass


class Unclassified(NumericalError):
    def __init__(self, lam, t_end):
        self.lam = lam
        self.t_end = t_end
        super().__init__(f"run with lambda={lam:g} neither propagated nor went extinct by t={t_end:g}")


class StageFailed(PulselabError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
