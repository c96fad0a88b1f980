"""Tail asymptotics of vector-valued Gaussian processes.

Numerical core: the lower-bound quadratic program behind the tail
constants, covariance model families with analytic local structure,
Monte Carlo estimators for multidimensional Pickands/Piterbarg constants,
multivariate normal tail probabilities, and evaluators comparing
closed-form asymptotics against rare-event simulation.
"""

__version__ = "0.1.0"

from .errors import (ConvergenceFailure, HypothesisRefusal,
                     NotPositiveDefiniteError)
from .qp import QPSolution, SymmetricPD, solve_pi_sigma

__all__ = [
    "__version__",
    "ConvergenceFailure",
    "HypothesisRefusal",
    "NotPositiveDefiniteError",
    "QPSolution",
    "SymmetricPD",
    "solve_pi_sigma",
]
