"""Exception types shared across the package."""


class MetamorphError(Exception):
    """Base class for all package-specific errors."""


class KindMismatchError(MetamorphError, ValueError):
    """Binary operation on points/images of different manifold kinds."""


class InvalidPointError(MetamorphError, ValueError):
    """Payload violates its manifold's point invariants."""


class GridMismatchError(MetamorphError, ValueError):
    """Binary operation on images/deformations over different grids."""


class OutOfDomainError(MetamorphError, ValueError):
    """A warped position left the unit-cube image domain beyond tolerance."""


class InversionError(MetamorphError, RuntimeError):
    """Fixed-point inversion of a deformation failed to contract."""


class AdmissibilityError(MetamorphError, ValueError):
    """Deformation violates the determinant bound or boundary condition."""


class ScenarioError(MetamorphError, ValueError):
    """Analytic scenario violates its compatibility requirements."""
