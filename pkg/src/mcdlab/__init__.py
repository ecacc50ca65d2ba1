"""Maximum-confidence state discrimination with separable and LOCC measurements."""

__version__ = "0.1.0"

from .linalg import HermitianOperator, partial_trace, partial_transpose, tensor  # noqa: E402
from .ensemble import Ensemble, average_state, paper_example  # noqa: E402
from .cones import (  # noqa: E402
    ConeVerdict,
    exactness_scope,
    is_block_positive,
    is_ew,
    is_psd,
    is_separable,
    is_weakly_optimal_ew,
    min_product_expectation,
)
from .confidence import (  # noqa: E402
    confidence_report,
    locc_confidence,
    max_confidence,
    nonlocality_gap,
    sigma_certificate,
)
from .constructions import WitnessFamily, ensemble_from_family, ensemble_from_witness  # noqa: E402
from .minerr import crosscheck_theorem5, guessing_probability, helstrom_two_state  # noqa: E402

__all__ = [
    "__version__",
    "HermitianOperator",
    "partial_trace",
    "partial_transpose",
    "tensor",
    "Ensemble",
    "average_state",
    "paper_example",
    "ConeVerdict",
    "exactness_scope",
    "is_block_positive",
    "is_ew",
    "is_psd",
    "is_separable",
    "is_weakly_optimal_ew",
    "min_product_expectation",
    "confidence_report",
    "locc_confidence",
    "max_confidence",
    "nonlocality_gap",
    "sigma_certificate",
    "WitnessFamily",
    "ensemble_from_family",
    "ensemble_from_witness",
    "crosscheck_theorem5",
    "guessing_probability",
    "helstrom_two_state",
]
