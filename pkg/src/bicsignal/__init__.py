"""Drug / adverse-event signal detection by BIC model selection in logistic regression."""

__version__ = "0.1.0"

from .dataset import (  # noqa: E402
    EligibilityMask,
    EventVector,
    ProfileTable,
    ReportMatrix,
    compress_profiles,
    eligibility_mask,
    load_reports,
    load_triplets,
)
from .logistic import CoefficientVector, FitResult, bic, fit_mle, loglik_weighted, signal_coefficients  # noqa: E402
from .search import ChainConfig, ModelVector, SearchProblem, SearchReport, exhaustive_search, run_chain, search  # noqa: E402

__all__ = [
    "ChainConfig",
    "CoefficientVector",
    "EligibilityMask",
    "EventVector",
    "FitResult",
    "ModelVector",
    "ProfileTable",
    "ReportMatrix",
    "SearchProblem",
    "SearchReport",
    "bic",
    "compress_profiles",
    "eligibility_mask",
    "exhaustive_search",
    "fit_mle",
    "load_reports",
    "load_triplets",
    "loglik_weighted",
    "run_chain",
    "search",
    "signal_coefficients",
]
