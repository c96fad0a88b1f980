"""Shared exception types."""


class NotPositiveDefiniteError(ValueError):
    """A matrix required to be (semi)definite is not."""


class HypothesisRefusal(RuntimeError):
    """The input falls outside the hypotheses of the implemented theory.

    Raised instead of silently extrapolating; mapped to exit code 2 by the CLI.
    """


class ConvergenceFailure(RuntimeError):
    """A ladder/plateau diagnostic did not stabilise within its budget."""
