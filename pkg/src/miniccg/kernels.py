"""Numba kernels for the MiniCCG rules engine and the search/feature hot paths.

A game state is one flat int64 array (``STATE_SIZE`` slots).  Every rule of
the game lives here, operating in place on that array; the object-level API
in :mod:`miniccg.engine` wraps these kernels with copy semantics and
validation.  Keeping the whole playout loop inside compiled code is what
makes full-game rollouts cheap enough for Monte-Carlo search.

Layout (offsets below): a global block, then two player blocks.  Board
minions are stored as 8 consecutive slots per minion; ``MF_TAG`` is an
engine-internal identity used by the board solver and never observable.

Actions are packed ints: ``kind * 16 + argument``.  The packed value is also
the "action ordinal" used for deterministic tie-breaking.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .cards import (
    COL_KIND, COL_COST, COL_ATK, COL_HP, COL_TAUNT, COL_CHARGE, COL_EFFECT, COL_AMOUNT,
    KIND_MINION, KIND_SPELL, KIND_COIN,
    EFF_BC_DMG_TARGET, EFF_BC_DMG_RANDOM, EFF_DR_DRAW, EFF_SP_DMG_TARGET, EFF_SP_AOE,
    EFF_SP_DRAW, EFF_SP_BUFF, EFF_SP_DISCOVER, EFF_HP_DMG, EFF_HP_DRAW_SELF, EFF_COIN,
    COIN_ID, HERO_POWER_IDS,
)

# ---------------------------------------------------------------------------
# State layout
# ---------------------------------------------------------------------------

G_ACTIVE = 0
G_TURN = 1
G_PHASE = 2
G_PENDING_CARD = 3
G_PENDING_SRC = 4      # 0 none, 1 spell in limbo, 2 battlecry of placed minion, 3 hero power
G_PENDING_SLOT = 5     # placed-minion slot (battlecry) or attacker slot (defend phase)
G_DISC0 = 6            # 3 discover option ids at 6, 7, 8
G_RESULT = 9           # -1 running, 0 player-0 win, 1 player-1 win, 2 draw
G_RNG = 10             # splitmix64 state (int64 bit pattern)
G_RNG_COUNT = 11       # draws consumed since game start
G_NEXT_TAG = 12        # next board-minion identity tag

P_BASE = (13, 217)     # player block offsets
PP_HERO_HP = 0
PP_MANA = 1
PP_MANA_MAX = 2
PP_FATIGUE = 3
PP_HP_USED = 4
PP_SOLVER_USED = 5
PP_SOLVER_ON = 6
PP_HAND_N = 7
PP_HAND = 8            # 10 slots
PP_DECK_N = 18
PP_DECK = 19           # 30 slots
PP_BOARD_N = 49
PP_BOARD = 50          # 7 minions x 8 fields
PP_GRAVE_N = 106
PP_GRAVE = 107         # 64 slots
PP_CREATED_N = 171
PP_CREATED = 172       # 32 slots
P_SIZE = 204

STATE_SIZE = 421

MF_DEF = 0
MF_ATK = 1
MF_HP = 2
MF_MAXHP = 3
MF_CAN = 4
MF_TAUNT = 5
MF_CHARGE = 6
MF_TAG = 7
MF_STRIDE = 8

PH_MAIN = 0
PH_PLACE = 1
PH_TARGET = 2
PH_DEFEND = 3
PH_DISCOVER = 4

# Packed action codes: kind * 16 + arg.
A_END = 0
A_PLAY = 16
A_PLACE = 32
A_TARGET = 48
A_ATTACK = 64
A_DEFEND = 80
A_HERO_POWER = 96
A_USE_SOLVER = 112
A_DISCOVER = 128

MAX_MOVES = 32
TURN_LIMIT = 60
HAND_CAP = 10
BOARD_CAP = 7
MANA_CAP = 10
CAPTURE_BUF = 192
DETERMINIZE_BUF = 80
SOLVER_PAIR_CAP = 8

RES_NONE = -1
RES_P0 = 0
RES_P1 = 1
RES_DRAW = 2


# ---------------------------------------------------------------------------
# Random stream (splitmix64 on the state's G_RNG slot)
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _rng_next(state):
    s = np.uint64(state[G_RNG]) + np.uint64(0x9E3779B97F4A7C15)
    state[G_RNG] = np.int64(s)
    state[G_RNG_COUNT] += 1
    return _mix64(s)


@njit(cache=True, inline="always")
def _rand_below(state, n):
    # modulo draw; bias of n / 2^64 is negligible at game ranges
    return np.int64(_rng_next(state) % np.uint64(n))


@njit(cache=True)
def mix64_value(x):
    """Public splitmix64 finalizer over a single int64 bit pattern."""
    return np.int64(_mix64(np.uint64(x)))


# ---------------------------------------------------------------------------
# Game setup
# ---------------------------------------------------------------------------

@njit(cache=True)
def new_game_fill(state, cards, deck0, deck1, seed):
    state[:] = 0
    state[G_RESULT] = RES_NONE
    state[G_PENDING_CARD] = -1
    state[G_PENDING_SLOT] = -1
    state[G_DISC0] = -1
    state[G_DISC0 + 1] = -1
    state[G_DISC0 + 2] = -1
    state[G_RNG] = seed
    state[G_NEXT_TAG] = 1
    state[G_TURN] = 1
    state[G_ACTIVE] = 0

    for p in range(2):
        b = P_BASE[p]
        state[b + PP_HERO_HP] = 30
        state[b + PP_SOLVER_ON] = 1
        src = deck0 if p == 0 else deck1
        for i in range(30):
            state[b + PP_DECK + i] = src[i]
        state[b + PP_DECK_N] = 30
        # Fisher-Yates, top index down
        for i in range(29, 0, -1):
            j = _rand_below(state, i + 1)
            d = b + PP_DECK
            tmp = state[d + i]
            state[d + i] = state[d + j]
            state[d + j] = tmp

    state[P_BASE[0] + PP_MANA] = 1
    state[P_BASE[0] + PP_MANA_MAX] = 1
    for _ in range(3):
        _draw_one(state, cards, 0)
    for _ in range(4):
        _draw_one(state, cards, 1)
    b1 = P_BASE[1]
    state[b1 + PP_HAND + state[b1 + PP_HAND_N]] = COIN_ID
    state[b1 + PP_HAND_N] += 1
    state[b1 + PP_CREATED + state[b1 + PP_CREATED_N]] = COIN_ID
    state[b1 + PP_CREATED_N] += 1


@njit(cache=True)
def _grave_push(state, p, cid):
    b = P_BASE[p]
    state[b + PP_GRAVE + state[b + PP_GRAVE_N]] = cid
    state[b + PP_GRAVE_N] += 1


@njit(cache=True)
def _draw_one(state, cards, p):
    b = P_BASE[p]
    if state[b + PP_DECK_N] == 0:
        state[b + PP_FATIGUE] += 1
        state[b + PP_HERO_HP] -= state[b + PP_FATIGUE]
        return
    state[b + PP_DECK_N] -= 1
    cid = state[b + PP_DECK + state[b + PP_DECK_N]]
    if state[b + PP_HAND_N] >= HAND_CAP:
        _grave_push(state, p, cid)  # overdraw burns
    else:
        state[b + PP_HAND + state[b + PP_HAND_N]] = cid
        state[b + PP_HAND_N] += 1


# ---------------------------------------------------------------------------
# Board bookkeeping
# ---------------------------------------------------------------------------

@njit(cache=True)
def _sweep_board(state, cards, p):
    """Remove dead minions left to right; deathrattles resolve at removal."""
    b = P_BASE[p]
    n = state[b + PP_BOARD_N]
    i = 0
    while i < n:
        m = b + PP_BOARD + i * MF_STRIDE
        if state[m + MF_HP] <= 0:
            cid = state[m + MF_DEF]
            for j in range(i, n - 1):
                src = b + PP_BOARD + (j + 1) * MF_STRIDE
                dst = b + PP_BOARD + j * MF_STRIDE
                for f in range(MF_STRIDE):
                    state[dst + f] = state[src + f]
            n -= 1
            state[b + PP_BOARD_N] = n
            if cards[cid, COL_EFFECT] == EFF_DR_DRAW:
                for _ in range(cards[cid, COL_AMOUNT]):
                    _draw_one(state, cards, p)
            _grave_push(state, p, cid)
        else:
            i += 1


@njit(cache=True)
def _update_result(state):
    if state[G_RESULT] >= 0:
        return
    hp0 = state[P_BASE[0] + PP_HERO_HP]
    hp1 = state[P_BASE[1] + PP_HERO_HP]
    if hp0 <= 0 and hp1 <= 0:
        state[G_RESULT] = RES_DRAW
    elif hp1 <= 0:
        state[G_RESULT] = RES_P0
    elif hp0 <= 0:
        state[G_RESULT] = RES_P1


@njit(cache=True)
def _do_combat(state, cards, att_slot, def_ref):
    """Resolve one attack of the active player's minion. def_ref: 8 = enemy
    hero, 9+j = enemy board slot j. Damage is simultaneous; the attacker's
    board is swept before the defender's."""
    a = state[G_ACTIVE]
    e = 1 - a
    ab = P_BASE[a]
    eb = P_BASE[e]
    m = ab + PP_BOARD + att_slot * MF_STRIDE
    state[m + MF_CAN] = 0
    atk = state[m + MF_ATK]
    if def_ref == 8:
        state[eb + PP_HERO_HP] -= atk
    else:
        d = eb + PP_BOARD + (def_ref - 9) * MF_STRIDE
        state[d + MF_HP] -= atk
        state[m + MF_HP] -= state[d + MF_ATK]
        _sweep_board(state, cards, a)
        _sweep_board(state, cards, e)


@njit(cache=True)
def _damage_character(state, cards, ref, amount):
    """ref: 0 own hero, 1..7 own minion, 8 enemy hero, 9..15 enemy minion
    (relative to the active player)."""
    a = state[G_ACTIVE]
    if ref == 0:
        state[P_BASE[a] + PP_HERO_HP] -= amount
    elif ref < 8:
        m = P_BASE[a] + PP_BOARD + (ref - 1) * MF_STRIDE
        state[m + MF_HP] -= amount
        _sweep_board(state, cards, a)
    elif ref == 8:
        state[P_BASE[1 - a] + PP_HERO_HP] -= amount
    else:
        m = P_BASE[1 - a] + PP_BOARD + (ref - 9) * MF_STRIDE
        state[m + MF_HP] -= amount
        _sweep_board(state, cards, 1 - a)


@njit(cache=True)
def _clear_pending(state):
    state[G_PHASE] = PH_MAIN
    state[G_PENDING_CARD] = -1
    state[G_PENDING_SRC] = 0
    state[G_PENDING_SLOT] = -1
    state[G_DISC0] = -1
    state[G_DISC0 + 1] = -1
    state[G_DISC0 + 2] = -1


# ---------------------------------------------------------------------------
# Legal moves
# ---------------------------------------------------------------------------

@njit(cache=True)
def gen_moves(state, cards, out):
    """Fill ``out`` with the packed legal actions; returns the count.
    Empty exactly when the state is terminal."""
    if state[G_RESULT] >= 0:
        return 0
    a = state[G_ACTIVE]
    ab = P_BASE[a]
    eb = P_BASE[1 - a]
    phase = state[G_PHASE]
    n = 0

    if phase == PH_MAIN:
        out[n] = A_END
        n += 1
        mana = state[ab + PP_MANA]
        board_n = state[ab + PP_BOARD_N]
        for i in range(state[ab + PP_HAND_N]):
            cid = state[ab + PP_HAND + i]
            if cards[cid, COL_COST] > mana:
                continue
            kind = cards[cid, COL_KIND]
            if kind == KIND_MINION:
                if board_n >= BOARD_CAP:
                    continue
            elif cards[cid, COL_EFFECT] == EFF_SP_BUFF and board_n == 0:
                continue  # buff needs a friendly minion
            out[n] = A_PLAY + i
            n += 1
        for s in range(board_n):
            m = ab + PP_BOARD + s * MF_STRIDE
            if state[m + MF_CAN] == 1 and state[m + MF_ATK] > 0:
                out[n] = A_ATTACK + s
                n += 1
        if state[ab + PP_HP_USED] == 0 and mana >= cards[HERO_POWER_IDS[a], COL_COST]:
            out[n] = A_HERO_POWER
            n += 1
        if state[ab + PP_SOLVER_ON] == 1 and state[ab + PP_SOLVER_USED] == 0:
            out[n] = A_USE_SOLVER
            n += 1

    elif phase == PH_PLACE:
        for j in range(state[ab + PP_BOARD_N] + 1):
            out[n] = A_PLACE + j
            n += 1

    elif phase == PH_TARGET:
        cid = state[G_PENDING_CARD]
        eff = cards[cid, COL_EFFECT]
        if eff == EFF_SP_BUFF:
            for i in range(state[ab + PP_BOARD_N]):
                out[n] = A_TARGET + 1 + i
                n += 1
        else:
            out[n] = A_TARGET + 0
            n += 1
            for i in range(state[ab + PP_BOARD_N]):
                out[n] = A_TARGET + 1 + i
                n += 1
            out[n] = A_TARGET + 8
            n += 1
            for j in range(state[eb + PP_BOARD_N]):
                out[n] = A_TARGET + 9 + j
                n += 1

    elif phase == PH_DEFEND:
        en = state[eb + PP_BOARD_N]
        has_taunt = False
        for j in range(en):
            if state[eb + PP_BOARD + j * MF_STRIDE + MF_TAUNT] == 1:
                has_taunt = True
                break
        if has_taunt:
            for j in range(en):
                if state[eb + PP_BOARD + j * MF_STRIDE + MF_TAUNT] == 1:
                    out[n] = A_DEFEND + 9 + j
                    n += 1
        else:
            out[n] = A_DEFEND + 8
            n += 1
            for j in range(en):
                out[n] = A_DEFEND + 9 + j
                n += 1

    elif phase == PH_DISCOVER:
        for i in range(3):
            out[n] = A_DISCOVER + i
            n += 1

    return n


# ---------------------------------------------------------------------------
# Applying actions
# ---------------------------------------------------------------------------

@njit(cache=True)
def _resolve_spell_after_target(state, cards, ref):
    cid = state[G_PENDING_CARD]
    eff = cards[cid, COL_EFFECT]
    a = state[G_ACTIVE]
    if eff == EFF_SP_BUFF:
        amount = cards[cid, COL_AMOUNT]
        m = P_BASE[a] + PP_BOARD + (ref - 1) * MF_STRIDE
        state[m + MF_ATK] += amount
        state[m + MF_HP] += amount
        state[m + MF_MAXHP] += amount
    else:
        _damage_character(state, cards, ref, cards[cid, COL_AMOUNT])
    _grave_push(state, a, cid)


@njit(cache=True)
def _place_minion(state, cards, slot, cid):
    a = state[G_ACTIVE]
    b = P_BASE[a]
    n = state[b + PP_BOARD_N]
    for j in range(n - 1, slot - 1, -1):
        src = b + PP_BOARD + j * MF_STRIDE
        dst = b + PP_BOARD + (j + 1) * MF_STRIDE
        for f in range(MF_STRIDE):
            state[dst + f] = state[src + f]
    m = b + PP_BOARD + slot * MF_STRIDE
    state[m + MF_DEF] = cid
    state[m + MF_ATK] = cards[cid, COL_ATK]
    state[m + MF_HP] = cards[cid, COL_HP]
    state[m + MF_MAXHP] = cards[cid, COL_HP]
    state[m + MF_CAN] = cards[cid, COL_CHARGE]  # summoning sickness unless charge
    state[m + MF_TAUNT] = cards[cid, COL_TAUNT]
    state[m + MF_CHARGE] = cards[cid, COL_CHARGE]
    state[m + MF_TAG] = state[G_NEXT_TAG]
    state[G_NEXT_TAG] += 1
    state[b + PP_BOARD_N] = n + 1


@njit(cache=True)
def apply_action(state, cards, spells, code):
    """Apply a legal packed action in place. Illegal input is undefined
    behaviour at this layer; the object API validates first."""
    a = state[G_ACTIVE]
    ab = P_BASE[a]
    kind = code // 16
    arg = code % 16

    if code == A_END:
        state[G_TURN] += 1
        if state[G_TURN] > TURN_LIMIT:
            state[G_RESULT] = RES_DRAW
            return
        nxt = 1 - a
        state[G_ACTIVE] = nxt
        nb = P_BASE[nxt]
        if state[nb + PP_MANA_MAX] < MANA_CAP:
            state[nb + PP_MANA_MAX] += 1
        state[nb + PP_MANA] = state[nb + PP_MANA_MAX]
        state[nb + PP_HP_USED] = 0
        state[nb + PP_SOLVER_USED] = 0
        for s in range(state[nb + PP_BOARD_N]):
            state[nb + PP_BOARD + s * MF_STRIDE + MF_CAN] = 1
        _draw_one(state, cards, nxt)

    elif kind == A_PLAY // 16:
        cid = state[ab + PP_HAND + arg]
        hn = state[ab + PP_HAND_N]
        for i in range(arg, hn - 1):
            state[ab + PP_HAND + i] = state[ab + PP_HAND + i + 1]
        state[ab + PP_HAND_N] = hn - 1
        state[ab + PP_MANA] -= cards[cid, COL_COST]
        ckind = cards[cid, COL_KIND]
        if ckind == KIND_MINION:
            state[G_PHASE] = PH_PLACE
            state[G_PENDING_CARD] = cid
            state[G_PENDING_SRC] = 1
        elif ckind == KIND_COIN:
            if state[ab + PP_MANA] < MANA_CAP:
                state[ab + PP_MANA] += 1
            _grave_push(state, a, cid)
        else:
            eff = cards[cid, COL_EFFECT]
            if eff == EFF_SP_DMG_TARGET or eff == EFF_SP_BUFF:
                state[G_PHASE] = PH_TARGET
                state[G_PENDING_CARD] = cid
                state[G_PENDING_SRC] = 1
            elif eff == EFF_SP_AOE:
                amount = cards[cid, COL_AMOUNT]
                for p in range(2):
                    pb = P_BASE[p]
                    for s in range(state[pb + PP_BOARD_N]):
                        state[pb + PP_BOARD + s * MF_STRIDE + MF_HP] -= amount
                _sweep_board(state, cards, a)
                _sweep_board(state, cards, 1 - a)
                _grave_push(state, a, cid)
            elif eff == EFF_SP_DRAW:
                for _ in range(cards[cid, COL_AMOUNT]):
                    _draw_one(state, cards, a)
                _grave_push(state, a, cid)
            else:  # EFF_SP_DISCOVER: roll 3 distinct spells, then choose
                state[G_PHASE] = PH_DISCOVER
                state[G_PENDING_CARD] = cid
                state[G_PENDING_SRC] = 1
                ns = len(spells)
                i0 = _rand_below(state, ns)
                i1 = _rand_below(state, ns - 1)
                if i1 >= i0:
                    i1 += 1
                i2 = _rand_below(state, ns - 2)
                if i2 >= min(i0, i1):
                    i2 += 1
                if i2 >= max(i0, i1):
                    i2 += 1
                state[G_DISC0] = spells[i0]
                state[G_DISC0 + 1] = spells[i1]
                state[G_DISC0 + 2] = spells[i2]

    elif kind == A_PLACE // 16:
        cid = state[G_PENDING_CARD]
        _place_minion(state, cards, arg, cid)
        eff = cards[cid, COL_EFFECT]
        if eff == EFF_BC_DMG_TARGET:
            state[G_PENDING_SRC] = 2
            state[G_PENDING_SLOT] = arg
            state[G_PHASE] = PH_TARGET
        else:
            if eff == EFF_BC_DMG_RANDOM:
                # draws: damage first, then target among enemy hero + minions
                amount = 1 + _rand_below(state, cards[cid, COL_AMOUNT])
                en = state[P_BASE[1 - a] + PP_BOARD_N]
                t = _rand_below(state, en + 1)
                ref = 8 if t == 0 else 9 + (t - 1)
                _damage_character(state, cards, ref, amount)
            _clear_pending(state)

    elif kind == A_TARGET // 16:
        src = state[G_PENDING_SRC]
        if src == 3:
            _damage_character(state, cards, arg, cards[HERO_POWER_IDS[a], COL_AMOUNT])
        elif src == 2:
            cid = state[G_PENDING_CARD]
            _damage_character(state, cards, arg, cards[cid, COL_AMOUNT])
        else:
            _resolve_spell_after_target(state, cards, arg)
        _clear_pending(state)

    elif kind == A_ATTACK // 16:
        state[G_PHASE] = PH_DEFEND
        state[G_PENDING_SLOT] = arg

    elif kind == A_DEFEND // 16:
        att = state[G_PENDING_SLOT]
        _clear_pending(state)
        _do_combat(state, cards, att, arg)

    elif code == A_HERO_POWER:
        hp_id = HERO_POWER_IDS[a]
        state[ab + PP_MANA] -= cards[hp_id, COL_COST]
        state[ab + PP_HP_USED] = 1
        if cards[hp_id, COL_EFFECT] == EFF_HP_DMG:
            state[G_PHASE] = PH_TARGET
            state[G_PENDING_CARD] = hp_id
            state[G_PENDING_SRC] = 3
        else:
            _draw_one(state, cards, a)
            state[ab + PP_HERO_HP] -= cards[hp_id, COL_AMOUNT]

    elif code == A_USE_SOLVER:
        pairs = np.empty((SOLVER_PAIR_CAP, 2), dtype=np.int64)
        npairs = solve_board_pairs(state, cards, pairs)
        for i in range(npairs):
            if state[G_RESULT] >= 0:
                break
            _do_combat(state, cards, pairs[i, 0], pairs[i, 1])
            _update_result(state)
        state[ab + PP_SOLVER_USED] = 1

    else:  # A_DISCOVER
        chosen = state[G_DISC0 + arg]
        _grave_push(state, a, state[G_PENDING_CARD])
        if state[ab + PP_HAND_N] >= HAND_CAP:
            _grave_push(state, a, chosen)  # full hand burns the pick
        else:
            state[ab + PP_HAND + state[ab + PP_HAND_N]] = chosen
            state[ab + PP_HAND_N] += 1
        state[ab + PP_CREATED + state[ab + PP_CREATED_N]] = chosen
        state[ab + PP_CREATED_N] += 1
        _clear_pending(state)

    _update_result(state)


# ---------------------------------------------------------------------------
# Board solver
# ---------------------------------------------------------------------------

@njit(cache=True)
def potential2(state, p):
    """Twice the board potential, in integers: 2*sum(attack+health) + hero hp."""
    b = P_BASE[p]
    tot = state[b + PP_HERO_HP]
    for s in range(state[b + PP_BOARD_N]):
        m = b + PP_BOARD + s * MF_STRIDE
        tot += 2 * (state[m + MF_ATK] + state[m + MF_HP])
    return tot


@njit(cache=True)
def _lethal_assignment(state, cards, assign_out):
    """Search attacker->taunt/face assignments for a kill this turn.
    assign_out[i] = taunt board slot for ready attacker i, or -1 for face,
    in ready-attacker order. Returns True when lethal was found."""
    a = state[G_ACTIVE]
    ab = P_BASE[a]
    eb = P_BASE[1 - a]
    hero_hp = state[eb + PP_HERO_HP]

    natt = 0
    att_atk = np.empty(BOARD_CAP, dtype=np.int64)
    att_slot = np.empty(BOARD_CAP, dtype=np.int64)
    for s in range(state[ab + PP_BOARD_N]):
        m = ab + PP_BOARD + s * MF_STRIDE
        if state[m + MF_CAN] == 1 and state[m + MF_ATK] > 0:
            att_atk[natt] = state[m + MF_ATK]
            att_slot[natt] = s
            natt += 1
    if natt == 0:
        return False

    ntaunt = 0
    taunt_hp = np.empty(BOARD_CAP, dtype=np.int64)
    taunt_slot = np.empty(BOARD_CAP, dtype=np.int64)
    for j in range(state[eb + PP_BOARD_N]):
        m = eb + PP_BOARD + j * MF_STRIDE
        if state[m + MF_TAUNT] == 1:
            taunt_hp[ntaunt] = state[m + MF_HP]
            taunt_slot[ntaunt] = j
            ntaunt += 1

    total = np.int64(0)
    for i in range(natt):
        total += att_atk[i]
    need_taunt = np.int64(0)
    for j in range(ntaunt):
        need_taunt += taunt_hp[j]
    if total < need_taunt + hero_hp:
        return False
    if ntaunt == 0:
        for i in range(natt):
            assign_out[i] = -1
        return True

    # depth-first over assignments: choice per attacker is face (ntaunt) or a taunt
    choice = np.full(natt, -1, dtype=np.int64)
    rem_hp = taunt_hp.copy()
    face = np.int64(0)
    suffix = np.empty(natt + 1, dtype=np.int64)
    suffix[natt] = 0
    for i in range(natt - 1, -1, -1):
        suffix[i] = suffix[i + 1] + att_atk[i]

    depth = 0
    nodes = 0
    while True:
        nodes += 1
        if nodes > 500000:
            return False  # search budget; treat as no lethal found
        if depth == natt:
            ok = face >= hero_hp
            if ok:
                for j in range(ntaunt):
                    if rem_hp[j] > 0:
                        ok = False
                        break
            if ok:
                for i in range(natt):
                    c = choice[i]
                    assign_out[i] = -1 if c == ntaunt else taunt_slot[c]
                return True
            depth -= 1
            if depth < 0:
                return False
        # undo previous choice at this depth
        c = choice[depth]
        if c >= 0:
            if c == ntaunt:
                face -= att_atk[depth]
            else:
                rem_hp[c] += att_atk[depth]
        # next choice: taunts first, then face
        c += 1
        while c < ntaunt and rem_hp[c] <= 0:
            c += 1
        if c > ntaunt:
            choice[depth] = -1
            depth -= 1
            if depth < 0:
                return False
            continue
        choice[depth] = c
        if c == ntaunt:
            face += att_atk[depth]
        else:
            rem_hp[c] -= att_atk[depth]
        # prune: remaining attackers cannot cover taunts + face deficit
        need = hero_hp - face
        if need < 0:
            need = 0
        for j in range(ntaunt):
            if rem_hp[j] > 0:
                need += rem_hp[j]
        if suffix[depth + 1] >= need:
            depth += 1


@njit(cache=True)
def _slot_by_tag(state, p, tag):
    b = P_BASE[p]
    for s in range(state[b + PP_BOARD_N]):
        if state[b + PP_BOARD + s * MF_STRIDE + MF_TAG] == tag:
            return s
    return -1


@njit(cache=True)
def solve_board_pairs(state, cards, out_pairs):
    """Compute the solver's attack sequence for the active player.

    Returns the number of (attacker_slot, defender_ref) pairs written to
    ``out_pairs``; indices are valid at sequential application. Branches:
    lethal this turn > defuse enemy lethal > greedy potential trades."""
    a = state[G_ACTIVE]
    ab = P_BASE[a]
    eb = P_BASE[1 - a]

    ready = np.empty(BOARD_CAP, dtype=np.int64)  # attacker slots
    nready = 0
    for s in range(state[ab + PP_BOARD_N]):
        m = ab + PP_BOARD + s * MF_STRIDE
        if state[m + MF_CAN] == 1 and state[m + MF_ATK] > 0:
            ready[nready] = s
            nready += 1
    if nready == 0:
        return 0

    # (a) lethal
    assign = np.empty(BOARD_CAP, dtype=np.int64)
    if _lethal_assignment(state, cards, assign):
        scratch = state.copy()
        n = 0
        hero_hp = state[eb + PP_HERO_HP]
        # taunt kills first; face attacks once every taunt is down
        for phase_face in range(2):
            for i in range(nready):
                if phase_face == 0 and assign[i] < 0:
                    continue
                if phase_face == 1:
                    if assign[i] >= 0:
                        continue
                    if hero_hp <= 0:
                        break
                att_tag = state[ab + PP_BOARD + ready[i] * MF_STRIDE + MF_TAG]
                cur_att = _slot_by_tag(scratch, a, att_tag)
                if cur_att < 0:
                    continue
                if phase_face == 0:
                    def_tag = state[eb + PP_BOARD + assign[i] * MF_STRIDE + MF_TAG]
                    cur_def = _slot_by_tag(scratch, 1 - a, def_tag)
                    if cur_def < 0:
                        continue
                    ref = 9 + cur_def
                else:
                    ref = 8
                    hero_hp -= state[ab + PP_BOARD + ready[i] * MF_STRIDE + MF_ATK]
                out_pairs[n, 0] = cur_att
                out_pairs[n, 1] = ref
                n += 1
                _do_combat(scratch, cards, cur_att, ref)
        return n

    # (b) enemy lethal threat: trade into the biggest attackers
    threat = np.int64(0)
    en = state[eb + PP_BOARD_N]
    for j in range(en):
        threat += state[eb + PP_BOARD + j * MF_STRIDE + MF_ATK]
    if threat >= state[ab + PP_HERO_HP] and en > 0:
        scratch = state.copy()
        n = 0
        while n < SOLVER_PAIR_CAP:
            sb = P_BASE[1 - a]
            sen = scratch[sb + PP_BOARD_N]
            if sen == 0:
                break
            rem = np.int64(0)
            for j in range(sen):
                rem += scratch[sb + PP_BOARD + j * MF_STRIDE + MF_ATK]
            if rem < scratch[P_BASE[a] + PP_HERO_HP]:
                break  # threat is gone
            has_taunt = False
            for j in range(sen):
                if scratch[sb + PP_BOARD + j * MF_STRIDE + MF_TAUNT] == 1:
                    has_taunt = True
                    break
            target = -1
            best_atk = np.int64(-1)
            for j in range(sen):
                if has_taunt and scratch[sb + PP_BOARD + j * MF_STRIDE + MF_TAUNT] == 0:
                    continue
                ja = scratch[sb + PP_BOARD + j * MF_STRIDE + MF_ATK]
                if ja > best_atk:
                    best_atk = ja
                    target = j
            # strongest ready attacker still alive on the scratch board
            att = -1
            aatk = np.int64(-1)
            bb = P_BASE[a]
            for s in range(scratch[bb + PP_BOARD_N]):
                m = bb + PP_BOARD + s * MF_STRIDE
                if scratch[m + MF_CAN] == 1 and scratch[m + MF_ATK] > aatk and scratch[m + MF_ATK] > 0:
                    aatk = scratch[m + MF_ATK]
                    att = s
            if att < 0 or target < 0:
                break
            out_pairs[n, 0] = att
            out_pairs[n, 1] = 9 + target
            n += 1
            _do_combat(scratch, cards, att, 9 + target)
            if scratch[G_RESULT] != RES_NONE:
                break
        return n

    # (c) greedy: score every attacker x defender pair once, apply best-first.
    # Combat is closed-form, so pair scores need no simulation: a dying
    # minion removes 2*(attack+health) of its side's doubled potential, a
    # surviving one loses 2*damage, and face hits remove hero hp directly.
    npairs = 0
    pair_att_tag = np.empty(64, dtype=np.int64)
    pair_def_tag = np.empty(64, dtype=np.int64)  # -1 = enemy hero
    pair_score = np.empty(64, dtype=np.int64)
    for i in range(nready):
        s = ready[i]
        m = ab + PP_BOARD + s * MF_STRIDE
        a_atk = state[m + MF_ATK]
        a_hp = state[m + MF_HP]
        att_tag = state[m + MF_TAG]
        for t in range(en + 1):
            if t == 0:
                dtag = np.int64(-1)
                d_own = np.int64(0)
                d_en = -a_atk
            else:
                d = eb + PP_BOARD + (t - 1) * MF_STRIDE
                d_atk = state[d + MF_ATK]
                d_hp = state[d + MF_HP]
                dtag = state[d + MF_TAG]
                d_own = -2 * (a_atk + a_hp) if a_hp <= d_atk else -2 * d_atk
                d_en = -2 * (d_atk + d_hp) if d_hp <= a_atk else -2 * a_atk
            pair_att_tag[npairs] = att_tag
            pair_def_tag[npairs] = dtag
            pair_score[npairs] = d_own - d_en
            npairs += 1
    # stable insertion sort, descending score
    for i in range(1, npairs):
        at = pair_att_tag[i]
        dt = pair_def_tag[i]
        sc = pair_score[i]
        j = i - 1
        while j >= 0 and pair_score[j] < sc:
            pair_att_tag[j + 1] = pair_att_tag[j]
            pair_def_tag[j + 1] = pair_def_tag[j]
            pair_score[j + 1] = pair_score[j]
            j -= 1
        pair_att_tag[j + 1] = at
        pair_def_tag[j + 1] = dt
        pair_score[j + 1] = sc

    scratch = state.copy()
    n = 0
    for i in range(npairs):
        if n >= SOLVER_PAIR_CAP or scratch[G_RESULT] != RES_NONE:
            break
        cur_att = _slot_by_tag(scratch, a, pair_att_tag[i])
        if cur_att < 0:
            continue
        m = P_BASE[a] + PP_BOARD + cur_att * MF_STRIDE
        if scratch[m + MF_CAN] == 0 or scratch[m + MF_ATK] <= 0:
            continue
        sb = P_BASE[1 - a]
        has_taunt = False
        for j in range(scratch[sb + PP_BOARD_N]):
            if scratch[sb + PP_BOARD + j * MF_STRIDE + MF_TAUNT] == 1:
                has_taunt = True
                break
        if pair_def_tag[i] < 0:
            if has_taunt:
                continue
            ref = 8
        else:
            cur_def = _slot_by_tag(scratch, 1 - a, pair_def_tag[i])
            if cur_def < 0:
                continue
            if has_taunt and scratch[sb + PP_BOARD + cur_def * MF_STRIDE + MF_TAUNT] == 0:
                continue
            ref = 9 + cur_def
        out_pairs[n, 0] = cur_att
        out_pairs[n, 1] = ref
        n += 1
        _do_combat(scratch, cards, cur_att, ref)
    return n


# ---------------------------------------------------------------------------
# Playouts
# ---------------------------------------------------------------------------

@njit(cache=True)
def playout_uniform(state, cards, spells, cutoff_k):
    """Play uniformly random legal moves in place until the game ends, or —
    when ``cutoff_k > 0`` — until an end-of-turn at or past step cutoff_k.
    Returns (finished_flag, steps): finished 1 = terminal, 0 = cut off."""
    moves = np.empty(MAX_MOVES, dtype=np.int64)
    steps = 0
    while state[G_RESULT] < 0:
        n = gen_moves(state, cards, moves)
        code = moves[_rand_below(state, n)]
        apply_action(state, cards, spells, code)
        steps += 1
        if cutoff_k > 0 and steps >= cutoff_k and code == A_END and state[G_RESULT] < 0:
            return 0, steps
    return 1, steps


@njit(cache=True)
def bench_random_games(cards, spells, deck0, deck1, n_games, seed):
    """Uniform-random full games; returns (steps, p0 wins, p1 wins, draws)."""
    state = np.empty(STATE_SIZE, dtype=np.int64)
    total_steps = 0
    w0 = 0
    w1 = 0
    dr = 0
    for g in range(n_games):
        new_game_fill(state, cards, deck0, deck1, np.int64(seed + g * 2654435761))
        _, steps = playout_uniform(state, cards, spells, 0)
        total_steps += steps
        r = state[G_RESULT]
        if r == RES_P0:
            w0 += 1
        elif r == RES_P1:
            w1 += 1
        else:
            dr += 1
    return total_steps, w0, w1, dr


# ---------------------------------------------------------------------------
# Invariant checking (fuzz support)
# ---------------------------------------------------------------------------

@njit(cache=True)
def check_invariants(state, cards, expected_counts, counts_scratch):
    """Return 0 if all structural invariants hold, else a violation code.
    expected_counts: (2, n_cards) original deck multisets. counts_scratch:
    (n_cards,) workspace. Codes: 1 hand cap, 2 deck range, 3 board cap,
    4 minion health bounds, 5 conservation, 6 turn limit, 7 mana range,
    8 spell stats on board, 9 score without terminal heroes."""
    n_cards = expected_counts.shape[1]
    if state[G_TURN] > TURN_LIMIT + 1:
        return 6
    for p in range(2):
        b = P_BASE[p]
        if state[b + PP_HAND_N] < 0 or state[b + PP_HAND_N] > HAND_CAP:
            return 1
        if state[b + PP_DECK_N] < 0 or state[b + PP_DECK_N] > 30:
            return 2
        if state[b + PP_BOARD_N] < 0 or state[b + PP_BOARD_N] > BOARD_CAP:
            return 3
        if state[b + PP_MANA] < 0 or state[b + PP_MANA_MAX] > MANA_CAP:
            return 7
        for s in range(state[b + PP_BOARD_N]):
            m = b + PP_BOARD + s * MF_STRIDE
            if state[m + MF_HP] < 1 or state[m + MF_HP] > state[m + MF_MAXHP]:
                return 4
            if cards[state[m + MF_DEF], COL_KIND] != KIND_MINION:
                return 8
        # conservation: zones + limbo == original deck + created
        for c in range(n_cards):
            counts_scratch[c] = 0
        for i in range(state[b + PP_HAND_N]):
            counts_scratch[state[b + PP_HAND + i]] += 1
        for i in range(state[b + PP_DECK_N]):
            counts_scratch[state[b + PP_DECK + i]] += 1
        for s in range(state[b + PP_BOARD_N]):
            counts_scratch[state[b + PP_BOARD + s * MF_STRIDE + MF_DEF]] += 1
        for i in range(state[b + PP_GRAVE_N]):
            counts_scratch[state[b + PP_GRAVE + i]] += 1
        if p == state[G_ACTIVE] and state[G_PENDING_CARD] >= 0:
            src = state[G_PENDING_SRC]
            if src == 1:
                counts_scratch[state[G_PENDING_CARD]] += 1
        for i in range(state[b + PP_CREATED_N]):
            counts_scratch[state[b + PP_CREATED + i]] -= 1
        for c in range(n_cards):
            if counts_scratch[c] != expected_counts[p, c]:
                return 5
    return 0


@njit(cache=True)
def fuzz_random_games(cards, spells, n_games, n_collectible, seed):
    """Random decks, random playouts, invariants checked after every action.
    Returns (violation_code, game_index, total_steps); code 0 means clean."""
    state = np.empty(STATE_SIZE, dtype=np.int64)
    seeder = np.empty(STATE_SIZE, dtype=np.int64)  # only rng slots used
    deck0 = np.empty(30, dtype=np.int64)
    deck1 = np.empty(30, dtype=np.int64)
    expected = np.zeros((2, cards.shape[0]), dtype=np.int64)
    scratch = np.zeros(cards.shape[0], dtype=np.int64)
    moves = np.empty(MAX_MOVES, dtype=np.int64)
    total_steps = 0
    for g in range(n_games):
        seeder[G_RNG] = np.int64(seed + g)
        seeder[G_RNG_COUNT] = 0
        for p in range(2):
            for c in range(cards.shape[0]):
                expected[p, c] = 0
        for i in range(30):
            deck0[i] = _rand_below(seeder, n_collectible)
            deck1[i] = _rand_below(seeder, n_collectible)
            expected[0, deck0[i]] += 1
            expected[1, deck1[i]] += 1
        new_game_fill(state, cards, deck0, deck1, seeder[G_RNG])
        code = check_invariants(state, cards, expected, scratch)
        if code != 0:
            return code, g, total_steps
        while state[G_RESULT] < 0:
            n = gen_moves(state, cards, moves)
            if n == 0:
                return 10, g, total_steps  # non-terminal state without moves
            apply_action(state, cards, spells, moves[_rand_below(state, n)])
            total_steps += 1
            code = check_invariants(state, cards, expected, scratch)
            if code != 0:
                return code, g, total_steps
        if gen_moves(state, cards, moves) != 0:
            return 11, g, total_steps  # terminal state offered moves
    return 0, n_games, total_steps


# ---------------------------------------------------------------------------
# Information sets and determinization
# ---------------------------------------------------------------------------

@njit(cache=True)
def capture_fill(state, perspective, out):
    """Write the canonical observable projection for ``perspective`` into
    ``out``; returns the length. Hidden zones (both deck contents, the
    opponent's hand identities, another player's discover options) and all
    internal bookkeeping (tags, rng) are excluded."""
    n = 0
    out[n] = perspective; n += 1
    out[n] = state[G_ACTIVE]; n += 1
    out[n] = state[G_TURN]; n += 1
    out[n] = state[G_PHASE]; n += 1
    out[n] = state[G_PENDING_CARD]; n += 1
    out[n] = state[G_PENDING_SRC]; n += 1
    out[n] = state[G_PENDING_SLOT]; n += 1
    if perspective == state[G_ACTIVE] and state[G_PHASE] == PH_DISCOVER:
        out[n] = state[G_DISC0]; n += 1
        out[n] = state[G_DISC0 + 1]; n += 1
        out[n] = state[G_DISC0 + 2]; n += 1
    else:
        out[n] = -1; n += 1
        out[n] = -1; n += 1
        out[n] = -1; n += 1
    for q in (perspective, 1 - perspective):
        b = P_BASE[q]
        out[n] = state[b + PP_HERO_HP]; n += 1
        out[n] = state[b + PP_MANA]; n += 1
        out[n] = state[b + PP_MANA_MAX]; n += 1
        out[n] = state[b + PP_FATIGUE]; n += 1
        out[n] = state[b + PP_HP_USED]; n += 1
        out[n] = state[b + PP_SOLVER_USED]; n += 1
        out[n] = state[b + PP_HAND_N]; n += 1
        out[n] = state[b + PP_DECK_N]; n += 1
        bn = state[b + PP_BOARD_N]
        out[n] = bn; n += 1
        for s in range(bn):
            m = b + PP_BOARD + s * MF_STRIDE
            out[n] = state[m + MF_DEF]; n += 1
            out[n] = state[m + MF_ATK]; n += 1
            out[n] = state[m + MF_HP]; n += 1
            out[n] = state[m + MF_MAXHP]; n += 1
            out[n] = state[m + MF_CAN]; n += 1
            out[n] = state[m + MF_TAUNT]; n += 1
            out[n] = state[m + MF_CHARGE]; n += 1
    b = P_BASE[perspective]
    for i in range(state[b + PP_HAND_N]):
        out[n] = state[b + PP_HAND + i]; n += 1
    return n


@njit(cache=True)
def hash_bytes64(buf, n):
    """64-bit hash of buf[:n] by splitmix chaining (stable across runs)."""
    h = np.uint64(0x9E3779B97F4A7C15)
    for i in range(n):
        h = _mix64(h ^ np.uint64(buf[i]))
        h = h + np.uint64(0x9E3779B97F4A7C15)
    return np.int64(_mix64(h))


@njit(cache=True)
def state_hash(state):
    return hash_bytes64(state, STATE_SIZE)


@njit(cache=True)
def determinize_random(state, perspective, seed):
    """Redistribute the hidden zones uniformly, in place: the perspective
    player's deck, the opponent's deck and the opponent's hand form one
    pool; shuffle it and deal back preserving zone sizes. The game rng and
    everything observable are untouched."""
    ob = P_BASE[perspective]
    eb = P_BASE[1 - perspective]
    pool = np.empty(DETERMINIZE_BUF, dtype=np.int64)
    n = 0
    for i in range(state[ob + PP_DECK_N]):
        pool[n] = state[ob + PP_DECK + i]; n += 1
    for i in range(state[eb + PP_DECK_N]):
        pool[n] = state[eb + PP_DECK + i]; n += 1
    for i in range(state[eb + PP_HAND_N]):
        pool[n] = state[eb + PP_HAND + i]; n += 1
    local = np.uint64(seed)
    for i in range(n - 1, 0, -1):
        local = local + np.uint64(0x9E3779B97F4A7C15)
        j = np.int64(_mix64(local) % np.uint64(i + 1))
        tmp = pool[i]
        pool[i] = pool[j]
        pool[j] = tmp
    k = 0
    for i in range(state[ob + PP_DECK_N]):
        state[ob + PP_DECK + i] = pool[k]; k += 1
    for i in range(state[eb + PP_DECK_N]):
        state[eb + PP_DECK + i] = pool[k]; k += 1
    for i in range(state[eb + PP_HAND_N]):
        state[eb + PP_HAND + i] = pool[k]; k += 1


# ---------------------------------------------------------------------------
# Feature vectorization
# ---------------------------------------------------------------------------

EMB_DIM = 10
FEATURE_DIM = 2 + 2 * 6 + 14 * (7 + EMB_DIM) + 10 * (2 + EMB_DIM)  # 372


@njit(cache=True, inline="always")
def _clamp1(x):
    if x > 1.0:
        return 1.0
    if x < -1.0:
        return -1.0
    return x


@njit(cache=True)
def vectorize_fill(state, perspective, cards, emb, out):
    """Fixed-layout feature vector from ``perspective``; every entry is
    clamped to [-1, 1]. Opponent hand contributes only its count."""
    n = 0
    out[n] = _clamp1(state[G_TURN] / 60.0); n += 1
    out[n] = 1.0 if state[G_ACTIVE] == perspective else 0.0; n += 1
    for q in (perspective, 1 - perspective):
        b = P_BASE[q]
        out[n] = _clamp1(state[b + PP_HERO_HP] / 30.0); n += 1
        out[n] = _clamp1(state[b + PP_MANA] / 10.0); n += 1
        out[n] = _clamp1(state[b + PP_MANA_MAX] / 10.0); n += 1
        out[n] = _clamp1(state[b + PP_HAND_N] / 10.0); n += 1
        out[n] = _clamp1(state[b + PP_DECK_N] / 30.0); n += 1
        out[n] = _clamp1(state[b + PP_FATIGUE] / 10.0); n += 1
    for q in (perspective, 1 - perspective):
        b = P_BASE[q]
        bn = state[b + PP_BOARD_N]
        for s in range(BOARD_CAP):
            if s < bn:
                m = b + PP_BOARD + s * MF_STRIDE
                out[n] = 1.0; n += 1
                out[n] = _clamp1(state[m + MF_ATK] / 12.0); n += 1
                out[n] = _clamp1(state[m + MF_HP] / 12.0); n += 1
                out[n] = _clamp1(state[m + MF_MAXHP] / 12.0); n += 1
                out[n] = np.float32(state[m + MF_CAN]); n += 1
                out[n] = np.float32(state[m + MF_TAUNT]); n += 1
                out[n] = np.float32(state[m + MF_CHARGE]); n += 1
                cid = state[m + MF_DEF]
                for d in range(EMB_DIM):
                    out[n] = emb[cid, d]; n += 1
            else:
                for _ in range(7 + EMB_DIM):
                    out[n] = 0.0; n += 1
    b = P_BASE[perspective]
    hn = state[b + PP_HAND_N]
    for i in range(HAND_CAP):
        if i < hn:
            cid = state[b + PP_HAND + i]
            out[n] = 1.0; n += 1
            out[n] = _clamp1(cards[cid, COL_COST] / 10.0); n += 1
            for d in range(EMB_DIM):
                out[n] = emb[cid, d]; n += 1
        else:
            for _ in range(2 + EMB_DIM):
                out[n] = 0.0; n += 1
    return n


# ---------------------------------------------------------------------------
# Fused MCTS selection step
# ---------------------------------------------------------------------------

@njit(cache=True)
def select_step(state, cards, spells, codes, n_obs, visits, wins, heur, count,
                c_uct, bias_w, ln_observed, moves):
    """One in-tree step: sync edges with the current legal moves, pick an
    edge by UCT (optionally with a decaying heuristic bias), apply its move.

    Edge arrays belong to the node keyed by the pre-move information set.
    Unvisited edges are taken first (lowest action code). Returns
    (new_edge_count, chosen_index, first_visit_flag)."""
    nmoves = gen_moves(state, cards, moves)
    best_new = -1
    for k in range(nmoves):
        code = moves[k]
        idx = -1
        for e in range(count):
            if codes[e] == code:
                idx = e
                break
        if idx < 0:
            idx = count
            codes[idx] = code
            n_obs[idx] = 0
            visits[idx] = 0
            wins[idx] = 0.0
            heur[idx] = 0.0
            count += 1
        n_obs[idx] += 1
        moves[k] = idx  # reuse buffer: active edge indices
        if visits[idx] == 0 and (best_new < 0 or codes[idx] < codes[best_new]):
            best_new = idx

    if best_new >= 0:
        chosen = best_new
    else:
        total = np.int64(0)
        for k in range(nmoves):
            e = moves[k]
            total += n_obs[e] if ln_observed else visits[e]
        log_total = np.log(np.float64(total))
        best_score = -1e18
        chosen = -1
        for k in range(nmoves):
            e = moves[k]
            v = np.float64(visits[e])
            score = wins[e] / v + c_uct * np.sqrt(log_total / v)
            if bias_w > 0.0:
                score += bias_w * heur[e] / (v + 1.0)
            if score > best_score or (score == best_score and chosen >= 0 and codes[e] < codes[chosen]):
                best_score = score
                chosen = e

    visits[chosen] += 1
    first = visits[chosen] == 1
    apply_action(state, cards, spells, codes[chosen])
    return count, chosen, first
