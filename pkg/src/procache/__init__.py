"""Proactive content caching over a fading wireless channel.

Simulation environment for cache-or-wait decisions on a mobile device,
threshold policy families (LISO, LFA) with finite-difference and
likelihood-ratio policy-gradient training, dynamic-programming lower bounds
(unlimited cache, non-causal access knowledge), and an exact oracle for tiny
instances.
"""

from .channel import ChannelConfig, DiscreteCostChannel
from .content import AccessModel, ContentGenConfig, SystemState
from .engine import Env
from .errors import (
    CapacityError,
    ConfigError,
    ImpossibleStateError,
    NumericalError,
    ProcacheError,
)
from .multiset import LifetimeMultiset
from .policy import LfaParams, LisoParams

__all__ = [
    "AccessModel",
    "CapacityError",
    "ChannelConfig",
    "ConfigError",
    "ContentGenConfig",
    "DiscreteCostChannel",
    "Env",
    "ImpossibleStateError",
    "LfaParams",
    "LisoParams",
    "LifetimeMultiset",
    "NumericalError",
    "ProcacheError",
    "SystemState",
]

__version__ = "0.1.0"
