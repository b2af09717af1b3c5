"""Exception types shared across the package."""


class SplitAnnulusError(Exception):
    """Base class for all package errors."""


class DiagonalPoint(SplitAnnulusError):
    """Evaluation requested on the diagonal x = y, which is off the annulus."""


class OutOfChart(SplitAnnulusError):
    """Point requires a chart transition the object does not support."""


class NonFiniteDensity(SplitAnnulusError):
    """Quadrature node evaluated to NaN or infinity."""


class NonFiniteIntegrand(NonFiniteDensity):
    """Action integrand evaluated to NaN or infinity."""


class NotCyclic(SplitAnnulusError):
    """Vertex projections of a polygonal curve fail cyclic ordering."""


class IncompatibleMetrics(SplitAnnulusError):
    """Metrics do not share a reference and chart."""


class NotC3(SplitAnnulusError):
    """Circle map does not supply third derivatives."""


class NotC3AtPoint(NotC3):
    """Third derivative requested at a breakpoint of a piecewise map."""


class SingularDual(SplitAnnulusError):
    """Linear system for the dual isotropic surface is rank deficient."""


class DegenerateIstar(SplitAnnulusError):
    """First fundamental form at infinity is singular at a point."""


class NotUnitNormal(SplitAnnulusError):
    """Surface normal fails the unit/orthogonality constraints."""


class NotTangent(SplitAnnulusError):
    """Vector fails the tangency constraints of the target manifold."""


class StepTooSmall(SplitAnnulusError):
    """Finite-difference step lost all significant digits."""


class ChartBreakdown(SplitAnnulusError):
    """Local constraint-projection chart failed to converge."""


class NotHolonomicBoundary(SplitAnnulusError):
    """Cobordism boundary map violates the contact condition."""


class NonCompactDifference(SplitAnnulusError):
    """Cobordism boundary maps differ outside the declared compact box."""


class CoincidentPoints(SplitAnnulusError):
    """Crossratio arguments are not pairwise distinct."""


class NonPositiveB(SplitAnnulusError):
    """Crossratio value is not positive where a logarithm is required."""


class NonSmoothB(SplitAnnulusError):
    """Crossratio lacks the derivatives needed for a metric density."""


class DegeneratePairing(SplitAnnulusError):
    """Flag-curve pairing vanished off the diagonal."""


class SClassFail(SplitAnnulusError):
    """Conformal factor failed an S-class clause."""

    def __init__(self, clause, message=""):
        self.clause = clause
        super().__init__(message or f"S-class clause ({clause}) failed")


class ConfigError(SplitAnnulusError):
    """Run configuration is malformed."""
