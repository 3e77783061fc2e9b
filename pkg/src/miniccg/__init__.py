"""MiniCCG: a fast two-player card game, imperfect-information MCTS bots,
and a self-play value-network training pipeline."""

__version__ = "0.1.0"

from .cards import CardDef, CardPool, default_pool, load_pool
from .engine import (Action, ActionKind, ConfigError, GameState,
                     IllegalActionError, apply, legal_moves, new_game,
                     random_playout, result)
from .infoset import Determinization, InformationSet, capture, determinize

__all__ = [
    "Action", "ActionKind", "CardDef", "CardPool", "ConfigError",
    "Determinization", "GameState", "IllegalActionError", "InformationSet",
    "apply", "capture", "default_pool", "determinize", "legal_moves",
    "load_pool", "new_game", "random_playout", "result",
]
