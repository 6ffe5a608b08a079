"""toomlab: a laboratory for noisy monotone binary cellular automata.

Submodules:
  rules    — monotone update rules, validation, minimal plus sets
  certify  — exact-rational erosion verdicts with checkable certificates
  bounds   — closed-form convergence constants and counting bounds
  engine   — bit-packed torus simulator with counter-based randomness
  oracle   — exact transfer-operator computations on tiny tori
  stats    — Monte Carlo estimators, decay fits, phase-divergence scans
  cli      — the `toomlab` command-line front end
"""

from . import bounds, certify, engine, oracle, rules, stats
from .errors import (
    CertificateFormatError,
    ConfigError,
    NumericalError,
    ResourceLimitError,
    RuleValidationError,
    ToomlabError,
)

__version__ = "0.1.0"

__all__ = [
    "bounds",
    "certify",
    "engine",
    "oracle",
    "rules",
    "stats",
    "CertificateFormatError",
    "ConfigError",
    "NumericalError",
    "ResourceLimitError",
    "RuleValidationError",
    "ToomlabError",
    "__version__",
]
