"""Power-supply-noise analysis of a 2x2 mesh network-on-chip.

Probabilistic (exact, explicit-state) and statistical (Monte Carlo) model
checking of resistive and inductive noise events under parameterized flit
injection patterns, across four model fidelity levels.
"""

from .levels import ModelLevel, NocModel, make_model
from .patterns import InjectionPattern
from .pmc import (
    BudgetExhausted,
    CheckResult,
    PropertySpec,
    StateSpaceStats,
    brute_force_check,
    check_reward_bounded,
    check_transient,
    explore,
)

__version__ = "0.1.0"

__all__ = [
    "BudgetExhausted",
    "CheckResult",
    "InjectionPattern",
    "ModelLevel",
    "NocModel",
    "PropertySpec",
    "StateSpaceStats",
    "brute_force_check",
    "check_reward_bounded",
    "check_transient",
    "explore",
    "make_model",
    "__version__",
]
