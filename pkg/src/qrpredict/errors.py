"""Exception types raised across the package."""


class ParameterError(ValueError):
    """An argument lies outside its admissible domain."""


class ContractError(ValueError):
    """Inputs are individually valid but mutually inconsistent."""


class SingularDesignError(ValueError):
    """A design matrix does not have full column rank."""


class DegenerateSplitError(SingularDesignError):
    """A sample-split projection cannot be formed (block mean of the instrument vanishes)."""


class WeakInstrumentError(SingularDesignError):
    """The instrument/regressor cross-moment matrix is singular."""


class DegenerateEstimateError(RuntimeError):
    """A simulation-based estimate collapsed to a non-finite or zero value."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap.

    The best iterate found so far is kept on ``best`` so callers can decide
    whether it is usable.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
