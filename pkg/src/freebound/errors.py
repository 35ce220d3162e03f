"""Exception types shared across the toolkit."""


class DomainError(ValueError):
    """A radius or point lies outside the domain of a profile, chart or ball."""


class NormalizationError(ValueError):
    """A conformal factor does not satisfy rho(0) = 1, or h fails to be r v(r^2) near the origin."""


class SingularityError(ValueError):
    """A field was evaluated at (or too close to) its prescribed singular point."""


class NumericError(RuntimeError):
    """A quadrature, root find or inversion did not reach its tolerance."""


class MeshError(ValueError):
    """A mesh violates its structural invariants or degenerated during a solve."""
