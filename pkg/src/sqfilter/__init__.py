"""Quantum filtering for open systems driven by squeezed light.

The general filter (``general_filter``) integrates the conditional density
matrix for an arbitrary (S, L, H, R) model with squeezed inputs; the Gaussian
filters (``gaussian_filter``) give the closed-form conditional mean and
covariances for the two single-mode cavity scenarios.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    ConsistencyError,
    IntegrationError,
    NonCommutingObservationError,
    PhysicalityError,
    SqFilterError,
    StepSizeError,
    StructuralError,
    TruncationError,
    UnsupportedScenarioError,
)
from .models import (  # noqa: E402
    InputMeans,
    ObservationSpec,
    Scenario,
    SLHModel,
    cavity_direct_model,
    cavity_mixed_model,
)
from .noise import ScalarSqueezing, SqueezingSpec, build_example_K, build_general_K  # noqa: E402

__all__ = [
    "__version__",
    "ConfigError",
    "ConsistencyError",
    "IntegrationError",
    "NonCommutingObservationError",
    "PhysicalityError",
    "SqFilterError",
    "StepSizeError",
    "StructuralError",
    "TruncationError",
    "UnsupportedScenarioError",
    "InputMeans",
    "ObservationSpec",
    "Scenario",
    "SLHModel",
    "cavity_direct_model",
    "cavity_mixed_model",
    "ScalarSqueezing",
    "SqueezingSpec",
    "build_example_K",
    "build_general_K",
]
