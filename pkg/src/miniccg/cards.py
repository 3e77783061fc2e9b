"""Card pool definitions and the packed numeric tables the kernels consume.

The pool ships as ``data/cards.json`` (human-editable; schema documented in
the file header and the README).  Everything the hot paths need is packed
into one int64 matrix so the numba kernels never touch Python objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

KIND_MINION = 0
KIND_SPELL = 1
KIND_HERO_POWER = 2
KIND_COIN = 3

_KIND_NAMES = {"minion": KIND_MINION, "spell": KIND_SPELL,
               "hero_power": KIND_HERO_POWER, "coin": KIND_COIN}

# Effect script ids (column EFFECT in the packed table).
EFF_NONE = 0
EFF_BC_DMG_TARGET = 1
EFF_BC_DMG_RANDOM = 2
EFF_DR_DRAW = 3
EFF_SP_DMG_TARGET = 4
EFF_SP_AOE = 5
EFF_SP_DRAW = 6
EFF_SP_BUFF = 7
EFF_SP_DISCOVER = 8
EFF_HP_DMG = 9
EFF_HP_DRAW_SELF = 10
EFF_COIN = 11

_SCRIPT_IDS = {
    None: EFF_NONE,
    "battlecry_damage_target": EFF_BC_DMG_TARGET,
    "battlecry_damage_random_enemy": EFF_BC_DMG_RANDOM,
    "deathrattle_draw": EFF_DR_DRAW,
    "damage_target": EFF_SP_DMG_TARGET,
    "damage_all_minions": EFF_SP_AOE,
    "draw_cards": EFF_SP_DRAW,
    "buff_friendly_minion": EFF_SP_BUFF,
    "discover_spell": EFF_SP_DISCOVER,
    "hero_power_damage": EFF_HP_DMG,
    "hero_power_draw_selfdamage": EFF_HP_DRAW_SELF,
    "coin_mana": EFF_COIN,
}

# Columns of the packed card table.
COL_KIND = 0
COL_COST = 1
COL_ATK = 2
COL_HP = 3
COL_TAUNT = 4
COL_CHARGE = 5
COL_EFFECT = 6
COL_AMOUNT = 7
N_COLS = 8

COIN_ID = 40
HERO_POWER_IDS = (41, 42)  # player 0 / player 1


class CardPoolError(ValueError):
    """Raised for malformed card data or decks referencing unknown ids."""


@dataclass(frozen=True)
class CardDef:
    id: int
    name: str
    kind: int
    cost: int
    attack: int
    health: int
    taunt: bool
    charge: bool
    effect: int
    amount: int
    text: str

    @property
    def collectible(self) -> bool:
        return self.kind in (KIND_MINION, KIND_SPELL)

    @property
    def tokens(self) -> list[str]:
        return self.text.split()


@dataclass
class CardPool:
    cards: list[CardDef]
    decks: dict[str, list[int]]
    table: np.ndarray = field(repr=False)  # (n_cards, N_COLS) int64
    spell_ids: np.ndarray = field(repr=False)  # collectible spells, for discover rolls

    def __len__(self) -> int:
        return len(self.cards)

    def __getitem__(self, card_id: int) -> CardDef:
        return self.cards[card_id]

    @property
    def collectible_ids(self) -> list[int]:
        return [c.id for c in self.cards if c.collectible]

    def validate_deck(self, deck: list[int]) -> None:
        if len(deck) != 30:
            raise CardPoolError(f"deck must have exactly 30 cards, got {len(deck)}")
        for cid in deck:
            if not (0 <= cid < len(self.cards)):
                raise CardPoolError(f"unknown card id {cid} in deck")
            if not self.cards[cid].collectible:
                raise CardPoolError(f"card id {cid} ({self.cards[cid].name}) is not collectible")

    def deck(self, name: str) -> list[int]:
        try:
            return list(self.decks[name])
        except KeyError:
            raise CardPoolError(f"unknown deck {name!r}; available: {sorted(self.decks)}") from None


def _parse_card(raw: dict) -> CardDef:
    kind = _KIND_NAMES.get(raw.get("kind"))
    if kind is None:
        raise CardPoolError(f"card {raw.get('id')}: unknown kind {raw.get('kind')!r}")
    eff = raw.get("effect")
    script, amount = (None, 0) if eff is None else (eff["script"], int(eff.get("amount", 0)))
    if script not in _SCRIPT_IDS:
        raise CardPoolError(f"card {raw.get('id')}: unknown effect script {script!r}")
    kw = set(raw.get("keywords", []))
    bad = kw - {"taunt", "charge"}
    if bad:
        raise CardPoolError(f"card {raw.get('id')}: unknown keywords {sorted(bad)}")
    card = CardDef(
        id=int(raw["id"]), name=str(raw["name"]), kind=kind, cost=int(raw["cost"]),
        attack=int(raw.get("attack", 0)), health=int(raw.get("health", 0)),
        taunt="taunt" in kw, charge="charge" in kw,
        effect=_SCRIPT_IDS[script], amount=amount, text=str(raw.get("text", "")),
    )
    if card.kind != KIND_MINION and (card.attack != 0 or card.health != 0):
        raise CardPoolError(f"card {card.id}: non-minions must have attack=health=0")
    if card.kind == KIND_MINION and card.health < 1:
        raise CardPoolError(f"card {card.id}: minion health must be >= 1")
    if not (0 <= card.cost <= 10):
        raise CardPoolError(f"card {card.id}: cost out of range")
    return card


def load_pool(path: str | None = None) -> CardPool:
    """Load a card pool from JSON; defaults to the bundled pool."""
    if path is None:
        raw = json.loads(resources.files("miniccg.data").joinpath("cards.json").read_text())
    else:
        with open(path) as fh:
            raw = json.load(fh)
    cards = [_parse_card(c) for c in raw["cards"]]
    ids = [c.id for c in cards]
    if ids != list(range(len(cards))):
        raise CardPoolError("card ids must be dense 0..n-1 and listed in order")
    table = np.zeros((len(cards), N_COLS), dtype=np.int64)
    for c in cards:
        table[c.id] = (c.kind, c.cost, c.attack, c.health,
                       int(c.taunt), int(c.charge), c.effect, c.amount)
    spell_ids = np.array([c.id for c in cards if c.kind == KIND_SPELL], dtype=np.int64)
    if len(spell_ids) < 3:
        raise CardPoolError("pool needs at least 3 collectible spells for discover")
    pool = CardPool(cards=cards, decks={}, table=table, spell_ids=spell_ids)
    for name, deck in raw.get("decks", {}).items():
        deck = [int(x) for x in deck]
        pool.validate_deck(deck)
        pool.decks[name] = deck
    return pool


_DEFAULT_POOL: CardPool | None = None


def default_pool() -> CardPool:
    global _DEFAULT_POOL
    if _DEFAULT_POOL is None:
        _DEFAULT_POOL = load_pool()
    return _DEFAULT_POOL
