"""Exception taxonomy shared by all curveflow modules."""


class CurveflowError(Exception):
    """Base class for all library errors."""


class ImmersionViolation(CurveflowError):
    """|c_theta| vanished (or nearly so) at some sample."""


class NonMonotone(CurveflowError):
    """A reparametrization phi lost strict monotonicity."""


class NonPositivePhi(CurveflowError):
    """Phi(l, kappa) <= 0 encountered while evaluating an almost-local metric."""


class SolveFailure(CurveflowError):
    """A linear system that should be definite could not be solved."""


class LogPole(CurveflowError):
    """The n=1 Bessel kernel (or its gradient) was evaluated at its pole."""


class DomainError(CurveflowError):
    """Argument outside the mathematical domain (e.g. bessel_K at x <= 0)."""


class SandwichViolation(CurveflowError):
    """lower <= mid <= upper failed beyond tolerance; signals a kernel bug."""


class LipschitzViolation(CurveflowError):
    """A Lipschitz ledger inequality failed; signals an integrator/metric bug."""


class MonitorBlowup(CurveflowError):
    """A conserved-quantity monitor exceeded its hard drift threshold.

    Carries the trajectory up to the last good step when the integrator
    raises it.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class NotArclength(CurveflowError):
    """An operation requiring arclength parametrization got a non-arclength curve."""


class ShapeInfeasible(CurveflowError):
    """Cigar shape parameters violate the scale-separation constraints."""


class StalledDescent(CurveflowError):
    """BVP gradient descent stopped making progress (informational)."""
