"""Exception types raised by the element, mesh and solver layers."""


class HexDivError(Exception):
    """Base class for all package errors."""


class NonPositiveJacobian(HexDivError):
    """The trilinear map is inverted or degenerate at a sample point."""


class NonFlatFace(HexDivError):
    """The four vertices of a face are not coplanar."""


class NoConvergence(HexDivError):
    """Newton iteration for the inverse map did not converge."""


class DegenerateElement(HexDivError):
    """A closed-form shape function denominator vanished."""


class RankDeficiency(HexDivError):
    """A flux matrix lost rank; the singular spectrum is attached."""

    def __init__(self, message, singular_values=None):
        super().__init__(message)
        self.singular_values = singular_values


class DegenerateCorner(HexDivError):
    """The three edges leaving the first vertex are linearly dependent."""


class SingularCnuMatrix(HexDivError):
    """The centroid-normal matrix is numerically singular."""


class SupplementSelectionFailed(HexDivError):
    """No probe point gave a usable determinant for the non-symmetric supplements."""


class SingularDofMatrix(HexDivError):
    """The degrees of freedom are not unisolvent on the element."""


class OddSubdivision(HexDivError):
    """Patterned meshes need an even number of cells per direction."""


class NonConforming(HexDivError):
    """Shared faces do not match vertex for vertex."""


class SolverDivergence(HexDivError):
    """The iterative solver hit its iteration cap."""


class SingularLocalBlock(HexDivError):
    """The local saddle-point block of an element is singular."""


class ElementBuildFailure(HexDivError):
    """An element space could not be built for a mesh cell."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class QuadratureOrderTooLow(HexDivError):
    """A quadrature rule is not exact enough for the integrand."""
