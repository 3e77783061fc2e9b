"""Information sets: what one player can see, and determinization.

An :class:`InformationSet` is a plain value wrapping the canonical encoding
of the observable projection of a state — own hand contents, own deck
count, both boards, both heroes' visible stats, opponent hand and deck
counts, turn/active/phase.  It exposes only hashing and equality; the
transposition table keys on it directly.
"""

from __future__ import annotations

from enum import Enum

from . import kernels as K
from .engine import GameState
from .rng import MASK64

import numpy as np


class Determinization(Enum):
    RANDOM = "random"
    CHEATER = "cheater"


class InformationSet:
    """Hashable observable projection of a state from one player's side."""

    __slots__ = ("perspective", "key", "_hash")

    def __init__(self, perspective: int, key: bytes):
        self.perspective = perspective
        self.key = key
        self._hash = hash(key)

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, InformationSet)
                and self.key == other.key)

    def __hash__(self) -> int:
        return self._hash

    def hash64(self) -> int:
        """Stable 64-bit hash (what game logs print); independent of
        Python's per-process hash randomization."""
        buf = np.frombuffer(self.key, dtype=np.int64)
        return int(K.hash_bytes64(buf, len(buf))) & MASK64

    def __repr__(self) -> str:
        return f"InformationSet(p{self.perspective}, {self.hash64():016x})"


def capture(state: GameState, perspective: int) -> InformationSet:
    """The information set of ``state`` as seen by ``perspective``.

    States that differ only in hidden zones (deck orders, opponent hand
    identities, another player's discover options) capture equal."""
    buf = np.empty(K.CAPTURE_BUF, dtype=np.int64)
    n = K.capture_fill(state.array, perspective, buf)
    return InformationSet(perspective, buf[:n].tobytes())


def determinize(state: GameState, perspective: int,
                mode: Determinization = Determinization.RANDOM,
                seed: int = 0) -> GameState:
    """A perfect-information sample consistent with what ``perspective``
    observes.

    RANDOM pools every hidden card (own deck, opponent deck, opponent hand),
    shuffles the pool with ``seed`` and deals it back preserving zone sizes,
    so the union multiset is exactly preserved.  CHEATER returns the true
    state unchanged.  Both leave the observable projection intact."""
    out = state.clone()
    if mode == Determinization.CHEATER:
        return out
    K.determinize_random(out.array, perspective, np.int64(np.uint64(seed & MASK64)))
    return out
