class HeunError(Exception):
    """Base class for every failure raised by the library."""


class LatticeError(HeunError):
    """Degenerate or malformed period lattice."""


class PoleProximityError(HeunError):
    def __init__(self, x, lattice_point, distance):
        self.x = x
        self.lattice_point = lattice_point
        self.distance = distance
        super().__init__(f"point {x} lies within {distance:.3e} of lattice point {lattice_point}")


class BranchConsistencyError(HeunError):
    """2 s1 s2 s3 disagrees with wp'."""


class FieldArithmeticError(HeunError):
    """Division by the zero expression or a pole hit during evaluation."""


class FuchsRelationError(HeunError):
    """Heun parameters violate gamma + delta + epsilon = alpha + beta + 1."""


class LatticeMismatchError(HeunError):
    """Expressions or operators built on different lattices were combined."""


class UnsupportedShiftError(HeunError):
    """Half-period shift requested for an expression with odd s_i parts."""


class SignChoiceError(HeunError):
    """alpha_i outside {-l_i, l_i + 1}."""


class NonIntegerDimensionError(HeunError):
    def __init__(self, d):
        self.d = d
        super().__init__(
            f"d = {d} is not a non-negative integer; no finite invariant space exists. "
            f"Use integraltransform / monodromy.compare_traces for real d")


class InvarianceViolationError(HeunError):
    """H b_n left the span of the basis."""


class SingularSystemError(HeunError):
    """Dependent basis in the annihilator construction."""


class PathPlanningError(HeunError):
    """No admissible continuation path could be built."""


class IntegrationError(HeunError):
    """The ODE integrator failed (step-size underflow or too many steps)."""


class InvalidPairError(HeunError):
    """Two coupling vectors are not related by any admissible sign choice."""


class ContourCrowdingError(HeunError):
    """Points of a Pochhammer contour are too close to each other."""


class QuadratureError(HeunError):
    """Contour quadrature did not reach the requested accuracy."""


class ChainError(HeunError):
    """Inadmissible Darboux-Crum chain or chain not returning to its start."""


class DescriptorError(HeunError):
    """Experiment descriptor failed schema validation."""


class ToleranceViolation(HeunError):
    """A contract tolerance was exceeded."""
