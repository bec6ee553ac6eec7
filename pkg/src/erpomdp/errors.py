"""Exception types shared across the toolkit."""


class ErpomdpError(Exception):
    """Base class for all toolkit errors."""


class ModelValidationError(ErpomdpError):
    """A model violates a structural invariant (shape, stochasticity, parameter range)."""


class ImpossibleObservation(ErpomdpError):
    """An observation has zero predictive probability under the current belief.

    Signals an inconsistency between the model and the data stream; the
    filter does not silently reset.
    """


class BoundaryBelief(ErpomdpError):
    """A belief too close to the simplex boundary for gradient evaluation."""


class WeightMismatch(ErpomdpError):
    """The linear cost representation requires equal entropy weights (beta == lambda)."""


class ZeroLikelihood(ErpomdpError):
    """An observation/action sequence has zero likelihood under the model."""


class TooLarge(ErpomdpError):
    """An exhaustive enumeration would exceed the resource guard."""
