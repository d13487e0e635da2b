"""Density-matrix game theory.

Classical games lift to diagonal payoff operators, quantum games to general
Hermitian ones; payoffs are traces against the players' density matrices.
"""
from densegame.config import DEFAULT_POLICY, NumericPolicy, Settings, get_settings
from densegame.errors import DenseGameError
from densegame.game_model import (
    AbstractGame,
    ClassicalGame,
    DensityProfile,
    MixedProfile,
    build_H_from_G,
    payoff_classical,
    payoff_trace,
)
from densegame.tensor_core import DensityMatrix, SpaceShape

__version__ = "0.1.0"

__all__ = [
    "AbstractGame",
    "ClassicalGame",
    "DEFAULT_POLICY",
    "DenseGameError",
    "DensityMatrix",
    "DensityProfile",
    "MixedProfile",
    "NumericPolicy",
    "Settings",
    "SpaceShape",
    "build_H_from_G",
    "get_settings",
    "payoff_classical",
    "payoff_trace",
]
