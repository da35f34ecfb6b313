"""Numerical verification of Killing fields on principal bundles with
connection metrics."""

__version__ = "0.1.0"

from .catalog import example_ids, get_example, list_examples  # noqa: E402,F401
from .errors import (  # noqa: E402,F401
    DecompositionObstructedError,
    GaugeKillingError,
    InvalidArgumentError,
    ModelInvalidError,
    PreconditionError,
    SolverFailureError,
)
