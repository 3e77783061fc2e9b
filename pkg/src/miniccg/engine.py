"""Object-level MiniCCG engine: states, actions, rules, playouts.

``GameState`` owns one flat int64 array and is a value type: cloning is an
array copy, equality is bitwise, and every mutation goes through
:func:`apply`.  The rules themselves are compiled in :mod:`miniccg.kernels`;
this module adds validation, readable views and serialization on top.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Optional, Sequence

import numpy as np

from . import kernels as K
from .cards import CardPool, default_pool, KIND_MINION
from .rng import MASK64


class ConfigError(ValueError):
    """Bad game setup (wrong deck size, unknown ids, malformed files)."""


class IllegalActionError(RuntimeError):
    """An action outside legal_moves was applied; callers must never do this."""


class ActionKind(enum.IntEnum):
    END_TURN = 0
    PLAY_CARD = 1
    PLACE_TARGET = 2
    EFFECT_TARGET = 3
    CHOOSE_ATTACKER = 4
    CHOOSE_DEFENDER = 5
    HERO_POWER = 6
    USE_SOLVER = 7
    DISCOVER = 8


class Action(NamedTuple):
    """One atomic action. ``code`` is the packed ordinal used everywhere in
    the hot paths and for deterministic tie-breaking."""

    kind: ActionKind
    arg: int = 0

    @property
    def code(self) -> int:
        return int(self.kind) * 16 + self.arg

    @staticmethod
    def from_code(code: int) -> "Action":
        return Action(ActionKind(code // 16), code % 16)

    def describe(self, state: "GameState | None" = None) -> str:
        """Human-readable rendering, with card names when a state is given."""
        k, a = self.kind, self.arg
        if k == ActionKind.END_TURN:
            return "end turn"
        if k == ActionKind.PLAY_CARD:
            if state is not None:
                hand = state.player(state.active).hand
                if a < len(hand):
                    return f"play [{a}] {state.pool[hand[a]].name}"
            return f"play hand card {a}"
        if k == ActionKind.PLACE_TARGET:
            return f"place at slot {a}"
        if k == ActionKind.EFFECT_TARGET:
            return f"target {describe_ref(a, state)}"
        if k == ActionKind.CHOOSE_ATTACKER:
            if state is not None:
                m = state.player(state.active).board[a]
                return f"attack with [{a}] {state.pool[m.card_id].name} ({m.attack}/{m.health})"
            return f"attack with minion {a}"
        if k == ActionKind.CHOOSE_DEFENDER:
            return f"hit {describe_ref(a, state)}"
        if k == ActionKind.HERO_POWER:
            return "hero power"
        if k == ActionKind.USE_SOLVER:
            return "use solver"
        return f"discover option {a}"


def describe_ref(ref: int, state: "GameState | None" = None) -> str:
    """Character reference: 0 own hero, 1-7 own minions, 8 enemy hero,
    9-15 enemy minions (relative to the active player)."""
    if ref == 0:
        return "own hero"
    if ref == 8:
        return "enemy hero"
    own = ref < 8
    slot = ref - 1 if own else ref - 9
    side = "own" if own else "enemy"
    if state is not None:
        p = state.active if own else 1 - state.active
        board = state.player(p).board
        if slot < len(board):
            m = board[slot]
            return f"{side} [{slot}] {state.pool[m.card_id].name} ({m.attack}/{m.health})"
    return f"{side} minion {slot}"


@dataclass(frozen=True)
class MinionView:
    card_id: int
    attack: int
    health: int
    max_health: int
    can_attack: bool
    taunt: bool
    charge: bool


class PlayerView:
    """Read/write window onto one player's block of the state array.
    Mutators exist for building test positions; regular play goes through
    apply() only."""

    def __init__(self, state: "GameState", index: int):
        self._s = state
        self._b = K.P_BASE[index]
        self.index = index

    def _get(self, off: int) -> int:
        return int(self._s.array[self._b + off])

    def _set(self, off: int, value: int) -> None:
        self._s.array[self._b + off] = value

    @property
    def hero_hp(self) -> int:
        return self._get(K.PP_HERO_HP)

    @hero_hp.setter
    def hero_hp(self, v: int) -> None:
        self._set(K.PP_HERO_HP, v)

    @property
    def mana(self) -> int:
        return self._get(K.PP_MANA)

    @mana.setter
    def mana(self, v: int) -> None:
        self._set(K.PP_MANA, v)

    @property
    def mana_max(self) -> int:
        return self._get(K.PP_MANA_MAX)

    @mana_max.setter
    def mana_max(self, v: int) -> None:
        self._set(K.PP_MANA_MAX, v)

    @property
    def fatigue(self) -> int:
        return self._get(K.PP_FATIGUE)

    @property
    def hero_power_used(self) -> bool:
        return bool(self._get(K.PP_HP_USED))

    @hero_power_used.setter
    def hero_power_used(self, v: bool) -> None:
        self._set(K.PP_HP_USED, int(v))

    @property
    def solver_used(self) -> bool:
        return bool(self._get(K.PP_SOLVER_USED))

    @property
    def solver_enabled(self) -> bool:
        return bool(self._get(K.PP_SOLVER_ON))

    @solver_enabled.setter
    def solver_enabled(self, v: bool) -> None:
        self._set(K.PP_SOLVER_ON, int(v))

    @property
    def hand(self) -> list[int]:
        n = self._get(K.PP_HAND_N)
        return [self._get(K.PP_HAND + i) for i in range(n)]

    def set_hand(self, ids: Sequence[int]) -> None:
        assert len(ids) <= K.HAND_CAP
        self._set(K.PP_HAND_N, len(ids))
        for i, cid in enumerate(ids):
            self._set(K.PP_HAND + i, cid)

    @property
    def deck(self) -> list[int]:
        n = self._get(K.PP_DECK_N)
        return [self._get(K.PP_DECK + i) for i in range(n)]

    def set_deck(self, ids: Sequence[int]) -> None:
        assert len(ids) <= 30
        self._set(K.PP_DECK_N, len(ids))
        for i, cid in enumerate(ids):
            self._set(K.PP_DECK + i, cid)

    @property
    def graveyard(self) -> list[int]:
        n = self._get(K.PP_GRAVE_N)
        return [self._get(K.PP_GRAVE + i) for i in range(n)]

    @property
    def created(self) -> list[int]:
        n = self._get(K.PP_CREATED_N)
        return [self._get(K.PP_CREATED + i) for i in range(n)]

    @property
    def board(self) -> list[MinionView]:
        out = []
        for s in range(self._get(K.PP_BOARD_N)):
            m = self._b + K.PP_BOARD + s * K.MF_STRIDE
            a = self._s.array
            out.append(MinionView(
                card_id=int(a[m + K.MF_DEF]), attack=int(a[m + K.MF_ATK]),
                health=int(a[m + K.MF_HP]), max_health=int(a[m + K.MF_MAXHP]),
                can_attack=bool(a[m + K.MF_CAN]), taunt=bool(a[m + K.MF_TAUNT]),
                charge=bool(a[m + K.MF_CHARGE])))
        return out

    def add_minion(self, card_id: int, attack: int | None = None,
                   health: int | None = None, can_attack: bool = True,
                   taunt: bool | None = None, charge: bool | None = None) -> None:
        """Test/position helper: push a minion onto the board."""
        a = self._s.array
        n = self._get(K.PP_BOARD_N)
        assert n < K.BOARD_CAP
        card = self._s.pool[card_id]
        assert card.kind == KIND_MINION
        m = self._b + K.PP_BOARD + n * K.MF_STRIDE
        hp = card.health if health is None else health
        a[m + K.MF_DEF] = card_id
        a[m + K.MF_ATK] = card.attack if attack is None else attack
        a[m + K.MF_HP] = hp
        a[m + K.MF_MAXHP] = max(hp, card.health)
        a[m + K.MF_CAN] = int(can_attack)
        a[m + K.MF_TAUNT] = int(card.taunt if taunt is None else taunt)
        a[m + K.MF_CHARGE] = int(card.charge if charge is None else charge)
        a[m + K.MF_TAG] = a[K.G_NEXT_TAG]
        a[K.G_NEXT_TAG] += 1
        self._set(K.PP_BOARD_N, n + 1)


class GameState:
    """Full perfect-information state; the only object that executes rules."""

    __slots__ = ("array", "pool")

    def __init__(self, array: np.ndarray, pool: CardPool):
        self.array = array
        self.pool = pool

    # -- core views ---------------------------------------------------------

    @property
    def active(self) -> int:
        return int(self.array[K.G_ACTIVE])

    @active.setter
    def active(self, v: int) -> None:
        self.array[K.G_ACTIVE] = v

    @property
    def turn(self) -> int:
        return int(self.array[K.G_TURN])

    @turn.setter
    def turn(self, v: int) -> None:
        self.array[K.G_TURN] = v

    @property
    def phase(self) -> int:
        return int(self.array[K.G_PHASE])

    @property
    def discover_options(self) -> list[int]:
        return [int(self.array[K.G_DISC0 + i]) for i in range(3)]

    @property
    def rng_state(self) -> int:
        return int(self.array[K.G_RNG]) & MASK64

    @rng_state.setter
    def rng_state(self, v: int) -> None:
        self.array[K.G_RNG] = np.int64(np.uint64(v & MASK64))

    @property
    def rng_draws(self) -> int:
        return int(self.array[K.G_RNG_COUNT])

    def player(self, index: int) -> PlayerView:
        return PlayerView(self, index)

    @property
    def terminal(self) -> bool:
        return int(self.array[K.G_RESULT]) >= 0

    # -- value semantics ----------------------------------------------------

    def clone(self) -> "GameState":
        return GameState(self.array.copy(), self.pool)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GameState) and bool(np.array_equal(self.array, other.array))

    def __hash__(self) -> int:
        return int(K.state_hash(self.array))

    def state_hash(self) -> int:
        """Stable 64-bit hash of the full state (for logs and replay checks)."""
        return int(K.state_hash(self.array)) & MASK64

    def rand_below(self, n: int) -> int:
        """Consume one draw from this state's stream (same bits as the kernels)."""
        out = np.empty(1, dtype=np.int64)
        out[0] = self.array[K.G_RNG]
        s = np.uint64(out[0]) + np.uint64(0x9E3779B97F4A7C15)
        self.array[K.G_RNG] = np.int64(s)
        self.array[K.G_RNG_COUNT] += 1
        z = int(K.mix64_value(np.int64(s))) & MASK64
        return z % n

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        def pl(i: int) -> dict:
            p = self.player(i)
            return {
                "hero_hp": p.hero_hp, "mana": p.mana, "mana_max": p.mana_max,
                "fatigue": p.fatigue, "hero_power_used": p.hero_power_used,
                "solver_used": p.solver_used, "solver_enabled": p.solver_enabled,
                "hand": p.hand, "deck": p.deck, "graveyard": p.graveyard,
                "created": p.created,
                "board": [vars(m) | {"card_id": m.card_id} for m in p.board],
            }
        return {
            "active": self.active, "turn": self.turn, "phase": self.phase,
            "pending_card": int(self.array[K.G_PENDING_CARD]),
            "pending_src": int(self.array[K.G_PENDING_SRC]),
            "pending_slot": int(self.array[K.G_PENDING_SLOT]),
            "discover": self.discover_options,
            "result": int(self.array[K.G_RESULT]),
            "rng_state": self.rng_state, "rng_draws": self.rng_draws,
            "players": [pl(0), pl(1)],
        }

    @staticmethod
    def from_json(data: dict, pool: CardPool | None = None) -> "GameState":
        pool = pool or default_pool()
        st = blank_state(pool)
        a = st.array
        a[K.G_ACTIVE] = data["active"]
        a[K.G_TURN] = data["turn"]
        a[K.G_PHASE] = data.get("phase", 0)
        a[K.G_PENDING_CARD] = data.get("pending_card", -1)
        a[K.G_PENDING_SRC] = data.get("pending_src", 0)
        a[K.G_PENDING_SLOT] = data.get("pending_slot", -1)
        for i, v in enumerate(data.get("discover", [-1, -1, -1])):
            a[K.G_DISC0 + i] = v
        a[K.G_RESULT] = data.get("result", -1)
        st.rng_state = data.get("rng_state", 1)
        a[K.G_RNG_COUNT] = data.get("rng_draws", 0)
        for i, pdata in enumerate(data["players"]):
            p = st.player(i)
            p.hero_hp = pdata["hero_hp"]
            p.mana = pdata["mana"]
            p.mana_max = pdata["mana_max"]
            a[K.P_BASE[i] + K.PP_FATIGUE] = pdata.get("fatigue", 0)
            p.hero_power_used = pdata.get("hero_power_used", False)
            a[K.P_BASE[i] + K.PP_SOLVER_USED] = int(pdata.get("solver_used", False))
            p.solver_enabled = pdata.get("solver_enabled", True)
            p.set_hand(pdata.get("hand", []))
            p.set_deck(pdata.get("deck", []))
            for cid in pdata.get("graveyard", []):
                a[K.P_BASE[i] + K.PP_GRAVE + a[K.P_BASE[i] + K.PP_GRAVE_N]] = cid
                a[K.P_BASE[i] + K.PP_GRAVE_N] += 1
            for cid in pdata.get("created", []):
                a[K.P_BASE[i] + K.PP_CREATED + a[K.P_BASE[i] + K.PP_CREATED_N]] = cid
                a[K.P_BASE[i] + K.PP_CREATED_N] += 1
            for m in pdata.get("board", []):
                p.add_minion(m["card_id"], attack=m.get("attack"),
                             health=m.get("health"), can_attack=m.get("can_attack", True),
                             taunt=m.get("taunt"), charge=m.get("charge"))
        return st


def blank_state(pool: CardPool | None = None) -> GameState:
    """An empty, running state for building positions by hand."""
    pool = pool or default_pool()
    a = np.zeros(K.STATE_SIZE, dtype=np.int64)
    a[K.G_RESULT] = K.RES_NONE
    a[K.G_PENDING_CARD] = -1
    a[K.G_PENDING_SLOT] = -1
    a[K.G_DISC0:K.G_DISC0 + 3] = -1
    a[K.G_TURN] = 1
    a[K.G_NEXT_TAG] = 1
    a[K.G_RNG] = 1
    st = GameState(a, pool)
    for i in range(2):
        st.player(i).hero_hp = 30
        st.player(i).solver_enabled = True
    return st


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------

def new_game(deck0: Sequence[int], deck1: Sequence[int], seed: int,
             pool: CardPool | None = None) -> GameState:
    """Start a game: seeded shuffles, 3-card/4-card opening draws, the coin
    to the second player, player 0 active on turn 1 with one crystal."""
    pool = pool or default_pool()
    pool.validate_deck(list(deck0))
    pool.validate_deck(list(deck1))
    a = np.empty(K.STATE_SIZE, dtype=np.int64)
    d0 = np.asarray(deck0, dtype=np.int64)
    d1 = np.asarray(deck1, dtype=np.int64)
    K.new_game_fill(a, pool.table, d0, d1, np.int64(np.uint64(seed & MASK64)))
    return GameState(a, pool)


def legal_moves(state: GameState) -> list[Action]:
    """All legal atomic actions; empty exactly when the state is terminal."""
    buf = np.empty(K.MAX_MOVES, dtype=np.int64)
    n = K.gen_moves(state.array, state.pool.table, buf)
    return [Action.from_code(int(buf[i])) for i in range(n)]


def legal_codes(state: GameState) -> list[int]:
    buf = np.empty(K.MAX_MOVES, dtype=np.int64)
    n = K.gen_moves(state.array, state.pool.table, buf)
    return [int(buf[i]) for i in range(n)]


def apply(state: GameState, action: Action) -> GameState:
    """Return the successor of a legal action (validates; never mutates)."""
    if action.code not in legal_codes(state):
        raise IllegalActionError(
            f"illegal action {action} in phase {state.phase} "
            f"(legal: {[a.describe(state) for a in legal_moves(state)]})")
    nxt = state.clone()
    K.apply_action(nxt.array, state.pool.table, state.pool.spell_ids, action.code)
    return nxt


def apply_inplace(state: GameState, code: int) -> None:
    """Unchecked fast path used by search and playouts."""
    K.apply_action(state.array, state.pool.table, state.pool.spell_ids, code)


def result(state: GameState) -> Optional[tuple[float, float]]:
    """Score vector of a finished game, or None while running."""
    r = int(state.array[K.G_RESULT])
    if r == K.RES_NONE:
        return None
    if r == K.RES_P0:
        return (1.0, 0.0)
    if r == K.RES_P1:
        return (0.0, 1.0)
    return (0.5, 0.5)


SimulationPolicy = Callable[[GameState, list[Action]], Action]


class EarlyCutoff:
    """Stop a simulation at the first end-of-turn at or past ``min_steps``
    and score the reached state with ``evaluate`` instead of playing on."""

    def __init__(self, min_steps: int, evaluate: Callable[[GameState], tuple[float, float]]):
        self.min_steps = min_steps
        self.evaluate = evaluate


def random_playout(state: GameState, policy: SimulationPolicy | None = None,
                   cutoff: EarlyCutoff | None = None) -> tuple[tuple[float, float], GameState]:
    """Play ``state`` to the end (or to the cutoff) and return
    (score vector, final state). The input state is not modified; all
    randomness comes from the playout copy's own stream."""
    s = state.clone()
    if policy is None:
        k = cutoff.min_steps if cutoff is not None else 0
        finished, _ = K.playout_uniform(s.array, s.pool.table, s.pool.spell_ids, k)
        if not finished and cutoff is not None:
            return cutoff.evaluate(s), s
        return result(s), s
    steps = 0
    while not s.terminal:
        moves = legal_moves(s)
        action = policy(s, moves)
        K.apply_action(s.array, s.pool.table, s.pool.spell_ids, action.code)
        steps += 1
        if (cutoff is not None and steps >= cutoff.min_steps
                and action.kind == ActionKind.END_TURN and not s.terminal):
            return cutoff.evaluate(s), s
    return result(s), s


def uniform_policy(state: GameState, moves: list[Action]) -> Action:
    """Uniform choice drawing from the state's own stream."""
    return moves[state.rand_below(len(moves))]


# ---------------------------------------------------------------------------
# Game log
# ---------------------------------------------------------------------------

class GameLogger:
    """Line-delimited action log: turn, actor, action, rng draws consumed so
    far, and the resulting state hash — enough to diff replays."""

    def __init__(self, fh):
        self.fh = fh

    def record(self, before: GameState, action: Action, after: GameState) -> None:
        self.fh.write(json.dumps({
            "turn": before.turn,
            "actor": before.active,
            "action": {"kind": action.kind.name, "arg": action.arg},
            "rng_draws": after.rng_draws,
            "state_hash": f"{after.state_hash():016x}",
        }) + "\n")
