"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: numeric failures exit 1, hypothesis
mismatches exit 2, domain/usage problems exit 64.
"""


class CbiError(Exception):
    """Base class for all cbiflow errors."""


class DomainError(CbiError, ValueError):
    """Argument outside the documented domain of an operation."""


class ScenarioError(DomainError):
    """Malformed scenario file (unknown keys, bad kinds, bad values)."""


class NumericError(CbiError):
    """A numerical procedure failed to reach its accuracy target."""


class QuadratureFailure(NumericError):
    """Adaptive quadrature did not converge; carries partial sums."""

    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


class InconclusiveQuadrature(NumericError):
    """Tail extrapolations disagreed across refinement levels."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


class RootBracketFailure(NumericError):
    """No sign change found in the root search window."""


class BisectionFailure(NumericError):
    """Monotone inversion failed to bracket or converge."""


class IntegrationFailure(NumericError):
    """ODE integration failed; carries the last accepted step."""

    def __init__(self, msg, last_t=None, last_v=None):
        super().__init__(msg)
        self.last_t = last_t
        self.last_v = last_v


class SingularRoot(NumericError):
    """Integration path touches a root of the branching mechanism."""


class StepInstability(NumericError):
    """A simulation step moved the state by more than the safety factor."""


class UnclassifiedRegime(NumericError):
    """The x*H'(x) trace matched none of the known divergence patterns."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


class SchemeMismatch(CbiError):
    """Simulation scheme cannot handle the given mechanisms."""


class HypothesisMismatch(CbiError):
    """Scenario violates the hypotheses of the requested theorem."""


class UnsupportedKind(CbiError):
    """Operation not available for this mechanism or law kind."""


class EmptyEnsemble(CbiError):
    """Statistics requested on an ensemble with no values."""


class InfiniteActivity(CbiError):
    """Exact subordinator sampling needs a finite jump rate."""
