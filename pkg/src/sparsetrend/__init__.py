"""Sparse decomposition of noisy 1-D signals.

A signal is modeled as a piecewise-linear trend plus sparse level shifts,
sparse outliers and a sparse set of sinusoids, found by adaptively weighted
l1 coordinate descent over an implicit structured dictionary with
closed-form inner products, with EBIC model selection over the
regularization grid.
"""

from .dictionary import (
    ColumnId,
    DictionarySpec,
    Kind,
    column_dot_signal,
    column_value,
    gram_diagonal,
    gram_entry,
    materialize,
    materialize_column,
    synthesize,
)
from .oracle import DenseProblem, KktReport, OracleError, dense_problem, kkt_check, oracle_solve
from .pipeline import FilterResult, decompose, omega_from_periods
from .selection import SelectionError, SelectionReport, ebic_score, select_model
from .signals import (
    Decomposition,
    Event,
    EventKind,
    Signal,
    SyntheticSpec,
    generate,
    reconstruct,
)
from .solver import (
    DEFAULT_GAMMAS,
    AdaptiveWeights,
    FitResult,
    FitState,
    NumericalFailure,
    SolverConfig,
    SparseCoefficients,
    coordinate_update,
    fit_path,
    fit_single,
    lambda_max,
    objective_value,
    ols_init,
    soft_threshold,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveWeights",
    "ColumnId",
    "Decomposition",
    "DenseProblem",
    "DictionarySpec",
    "Event",
    "EventKind",
    "FilterResult",
    "FitResult",
    "FitState",
    "Kind",
    "KktReport",
    "NumericalFailure",
    "OracleError",
    "SelectionError",
    "SelectionReport",
    "Signal",
    "SolverConfig",
    "SparseCoefficients",
    "SyntheticSpec",
    "DEFAULT_GAMMAS",
    "column_dot_signal",
    "column_value",
    "coordinate_update",
    "decompose",
    "dense_problem",
    "ebic_score",
    "fit_path",
    "fit_single",
    "generate",
    "gram_diagonal",
    "gram_entry",
    "kkt_check",
    "lambda_max",
    "materialize",
    "materialize_column",
    "objective_value",
    "ols_init",
    "omega_from_periods",
    "oracle_solve",
    "reconstruct",
    "select_model",
    "soft_threshold",
    "synthesize",
]
