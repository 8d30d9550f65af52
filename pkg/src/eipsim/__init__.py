"""Error identification protocols for entanglement purification.

Submodules
----------
core
    Pair states, configurations, auxiliary qudits and depolarization maps.
noise
    Noisy auxiliary sources and gate noise.
protocols
    Executable protocol runs with transcripts and resource ledgers.
montecarlo
    Seeded batch driver.
analytics
    Closed-form and enumerated yields, fidelities and bounds.
oracle
    Dense reference simulator used for validation.
"""
from .core import (ConfigError, Configuration, DimensionMismatch, EipError, Inconsistent,
                   InfeasibleFidelity, InvalidDensity, PairState, PreconditionViolated,
                   ProductEnsemble, TooLarge)
from .protocols import AbortPolicy, ProtocolParams, ProtocolResult

__version__ = "0.1.0"

__all__ = ["AbortPolicy", "ConfigError", "Configuration", "DimensionMismatch", "EipError",
           "Inconsistent", "InfeasibleFidelity", "InvalidDensity", "PairState",
           "PreconditionViolated", "ProductEnsemble", "ProtocolParams", "ProtocolResult",
           "TooLarge"]
