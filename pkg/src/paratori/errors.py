"""Exception types shared across the library."""


class ParatoriError(Exception):
    """Base class for all library errors."""


class NonzeroAverage(ParatoriError):
    """Small-divisors input must have zero angular average."""


class NearResonance(ParatoriError):
    """A retained Fourier mode hits a divisor below the configured floor.

    Signals that the frequency is too close to a resonance at the current
    truncation; carries the offending mode and divisor magnitude.
    """

    def __init__(self, k, divisor):
        self.k = tuple(k)
        self.divisor = divisor
        super().__init__(f"near-resonant mode k={self.k}: |divisor|={divisor:.3e}")


class OutsideCone(ParatoriError):
    """Evaluation point lies outside the declared cone domain."""


class OrderUnderflow(ParatoriError):
    """Composition order request is ill-defined for the inner leading orders."""


class OrderViolation(ParatoriError):
    """A sum contains terms below its declared leading order."""


class BackendUnsupported(ParatoriError):
    """Operation not available for this term backend."""


class EmptyCone(ParatoriError):
    """Cone specification produces no sample points."""


class NonFiniteQuotient(ParatoriError):
    """A defining quotient for a cone constant is not finite."""


class WeakContractionFail(ParatoriError):
    """The weak contraction constant is non-positive."""


class HypothesisFail(ParatoriError):
    """A required theorem hypothesis fails."""


class SingularGbar(ParatoriError):
    """d_y(average g^M)(x,0) loses invertibility on a cone sample."""


class DivergenceRisk(ParatoriError):
    """Degree condition for the homogeneous-coefficient PDE fails."""


class QuadratureStall(ParatoriError):
    """Improper-integral evaluation cannot meet its tolerance."""


class NonContraction(ParatoriError):
    """A fixed-point sweep measured a Lipschitz estimate >= 1."""


class NotRootOfUnity(ParatoriError):
    """Linearization eigenvalues are not all roots of unity."""


class ConeExit(ParatoriError):
    """A trajectory left the cone domain."""

    def __init__(self, t, state):
        self.t = t
        self.state = state
        super().__init__(f"trajectory left the cone at t={t:.6g}")


class Collision(ParatoriError):
    """Two bodies are at (numerically) zero distance."""


class DomainViolation(ParatoriError):
    """Cluster geometry outside the analyticity domain of the potential."""


class NewtonDiverged(ParatoriError):
    """A Newton iteration failed to converge."""


class MassTooLarge(ParatoriError):
    """Mass-dependent fixed point (blow-up diagonalization) did not contract."""


class NoValidEll(ParatoriError):
    """No chart exponent ell satisfies nu/ell < gamma_2."""


class ParseError(ParatoriError):
    """Malformed input file."""
