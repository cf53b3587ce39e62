"""Exception and warning types raised by dynbasis."""


class DynBasisError(Exception):
    """Base class for all dynbasis errors."""


class DimensionError(DynBasisError, ValueError):
    """Operands have incompatible shapes."""


class WeightError(DynBasisError, ValueError):
    """State or sample weights violate their invariants."""


class RankDeficiencyError(DynBasisError, ValueError):
    """A basis column is (numerically) linearly dependent on its predecessors."""

    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"column {column} is numerically dependent on columns 0..{column - 1}")


class StencilError(DynBasisError, ValueError):
    """Not enough snapshots in a window for the requested derivative scheme."""


class SnapshotFormatError(DynBasisError):
    """A snapshot file or manifest is missing, corrupt or inconsistent."""


class HeaderMismatchError(SnapshotFormatError):
    """Snapshot header or payload size disagrees with the manifest."""


class NonUniformTimeError(SnapshotFormatError, ValueError):
    """Snapshot times are not uniformly spaced."""


class IndefiniteCovarianceError(DynBasisError, ArithmeticError):
    """Reduced covariance has a significantly negative eigenvalue."""


class ContractError(DynBasisError, ValueError):
    """An operation precondition was violated (e.g. a non skew-symmetric phi)."""


class NumericalError(DynBasisError, ArithmeticError):
    """Non-finite values or loss of orthonormality during time integration."""

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class AliasingError(DynBasisError, ValueError):
    """Polynomial chaos order is too high for the number of quadrature nodes."""


class MemoryBudgetError(DynBasisError, MemoryError):
    """An assembled matrix would exceed the configured memory budget."""


class ConfigError(DynBasisError, ValueError):
    """Invalid testbed, reduction or experiment configuration."""


class RankDeficiencyWarning(UserWarning):
    """Requested rank exceeds the numerical rank of the data."""


class DegenerateCovarianceWarning(UserWarning):
    """All covariance eigenvalues fell below the pseudo-inverse threshold."""


class DMDWarning(UserWarning):
    """A DMD eigenvalue was dropped or the energy threshold was unreachable."""
