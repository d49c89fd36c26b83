"""rtmc: exact analysis of real-time multi-terminal coding systems.

Simulates the two-encoder/one-receiver model, implements the belief
recursions and the common-information coordinator dynamic program, and
verifies the structural optimality results against brute-force strategy
enumeration on small instances.
"""

__version__ = "0.1.0"

from . import beliefs, coordinator, engine, model, oracle, policies  # noqa: F401
from .errors import (  # noqa: F401
    BudgetExceededError,
    ImpossibleEvidenceError,
    MissingEntryError,
    ModelError,
)
