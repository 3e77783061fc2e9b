"""Monte-Carlo tree search over information-set-keyed transposition tables.

The "tree" is a DAG: nodes live in a transposition table keyed by
information sets, edges are per-move statistics, and an edge's next-node
pointer is recomputed every iteration by actually re-applying the move to
the current determinized state.  Randomized outcomes therefore never need
chance nodes — each re-application samples the effect afresh and the edge
statistics average over the outcome distribution.

Each iteration: determinize the root state, walk the DAG with UCT until a
freshly visited edge ends the selection phase, simulate to the end of the
game (or to an early cutoff), and add the score to every edge on the path
from the perspective of its node's acting player.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import numpy as np

from . import kernels as K
from .engine import Action, GameState, legal_codes, result, random_playout, EarlyCutoff
from .infoset import Determinization, InformationSet, capture
from .rng import SplitMix64


class StateEvaluator(Protocol):
    """Maps a state to estimated win probabilities (player 0, player 1)."""

    def score_vector(self, state: GameState) -> tuple[float, float]: ...


@dataclass
class SearchConfig:
    """Knobs of one search instance.

    ``iterations`` is the deterministic budget; ``time_limit`` (seconds,
    monotonic clock, checked each iteration) wins when set.  The bias weight
    and cutoff only act when an evaluator is supplied.  ``ln_observed``
    switches the UCT log argument from summed visit counts to summed
    observed counts (fidelity toggle; defaults to standard UCT)."""

    exploration: float = math.sqrt(2.0)
    iterations: int = 1000
    time_limit: Optional[float] = None
    determinization: Determinization = Determinization.RANDOM
    tree_bias_weight: float = 0.0
    cutoff_min_steps: int = 0
    ln_observed: bool = False
    seed: int = 0


class Node:
    """Edge statistics of one information set, stored as parallel arrays."""

    __slots__ = ("acting", "codes", "n_obs", "visits", "wins", "heur", "children", "count")

    INITIAL_CAP = 24

    def __init__(self, acting: int):
        cap = Node.INITIAL_CAP
        self.acting = acting
        self.codes = np.empty(cap, dtype=np.int64)
        self.n_obs = np.zeros(cap, dtype=np.int64)
        self.visits = np.zeros(cap, dtype=np.int64)
        self.wins = np.zeros(cap, dtype=np.float64)
        self.heur = np.zeros(cap, dtype=np.float64)
        self.children: list[Optional[Node]] = [None] * cap
        self.count = 0

    def ensure_capacity(self) -> None:
        if self.count + K.MAX_MOVES <= len(self.codes):
            return
        new_cap = len(self.codes) * 2
        for name in ("codes", "n_obs", "visits", "wins", "heur"):
            old = getattr(self, name)
            grown = np.zeros(new_cap, dtype=old.dtype)
            grown[: len(old)] = old
            setattr(self, name, grown)
        self.children = self.children + [None] * (new_cap - len(self.children))

    def edge(self, index: int) -> "Edge":
        return Edge(self, index)

    def edges(self) -> dict[Action, "Edge"]:
        return {Action.from_code(int(self.codes[i])): Edge(self, i) for i in range(self.count)}

    def edge_for(self, action: Action) -> Optional["Edge"]:
        for i in range(self.count):
            if self.codes[i] == action.code:
                return Edge(self, i)
        return None

    def total_visits(self) -> int:
        return int(self.visits[: self.count].sum())


class Edge:
    """Live view of one (node, move) statistic row."""

    __slots__ = ("node", "index")

    def __init__(self, node: Node, index: int):
        self.node = node
        self.index = index

    @property
    def move(self) -> Action:
        return Action.from_code(int(self.node.codes[self.index]))

    @property
    def n_observed(self) -> int:
        return int(self.node.n_obs[self.index])

    @property
    def visits(self) -> int:
        return int(self.node.visits[self.index])

    @visits.setter
    def visits(self, v: int) -> None:
        self.node.visits[self.index] = v

    @property
    def wins(self) -> float:
        return float(self.node.wins[self.index])

    @wins.setter
    def wins(self, w: float) -> None:
        self.node.wins[self.index] = w

    @property
    def q(self) -> float:
        v = self.visits
        return self.wins / v if v > 0 else 0.0

    @property
    def next_node(self) -> Optional[Node]:
        return self.node.children[self.index]

    @next_node.setter
    def next_node(self, child: Optional[Node]) -> None:
        self.node.children[self.index] = child

    def __repr__(self) -> str:
        return f"Edge({self.move}, N={self.n_observed}, V={self.visits}, W={self.wins:.2f})"


class TranspositionTable:
    """Unique mapping from information sets to nodes."""

    def __init__(self) -> None:
        self.nodes: dict[InformationSet, Node] = {}

    def find_or_create(self, iset: InformationSet, acting: int) -> Node:
        node = self.nodes.get(iset)
        if node is None:
            node = Node(acting)
            self.nodes[iset] = node
        return node

    def get(self, iset: InformationSet) -> Optional[Node]:
        return self.nodes.get(iset)

    def __len__(self) -> int:
        return len(self.nodes)


def uct_score(edge, node_visits: int, c: float) -> float:
    """Upper-confidence score of an edge: Q + c * sqrt(ln(node_visits) / V).
    Unvisited edges score +inf so every edge is tried before any revisit."""
    v = edge.visits
    if v == 0:
        return math.inf
    return edge.wins / v + c * math.sqrt(math.log(node_visits) / v)


def backpropagate(path: list[tuple[Edge, int]], score: tuple[float, float]) -> None:
    """Add the score, from each edge's acting player's perspective, to every
    edge chosen during selection (visit counts were bumped at selection)."""
    for edge, acting in path:
        edge.wins += score[acting]


def select(node: Node, state: GameState, cfg: SearchConfig,
           tt: TranspositionTable,
           evaluator: Optional[StateEvaluator] = None) -> tuple[Edge, GameState, Optional[InformationSet]]:
    """One selection step: sync edges with the moves legal in ``state``,
    choose by UCT among the active ones, apply the move to ``state`` in
    place, and re-resolve the edge's next node via the transposition table.
    The returned information set is None when the move ended the game."""
    node.ensure_capacity()
    moves_buf = np.empty(K.MAX_MOVES, dtype=np.int64)
    bias = cfg.tree_bias_weight if evaluator is not None else 0.0
    count, idx, first = K.select_step(
        state.array, state.pool.table, state.pool.spell_ids,
        node.codes, node.n_obs, node.visits, node.wins, node.heur, node.count,
        cfg.exploration, bias, cfg.ln_observed, moves_buf)
    node.count = int(count)
    edge = Edge(node, int(idx))
    if first and bias > 0.0:
        node.heur[idx] = evaluator.score_vector(state)[node.acting]
    if state.terminal:
        edge.next_node = None
        return edge, state, None
    iset = capture(state, state.active)
    edge.next_node = tt.find_or_create(iset, acting=state.active)
    return edge, state, iset


@dataclass
class SearchResult:
    action: Action
    iterations: int
    elapsed: float
    table_size: int
    root_edges: dict[Action, tuple[int, int, float]]  # move -> (N, V, W)

    def to_record(self) -> dict:
        return {
            "action": {"kind": self.action.kind.name, "arg": self.action.arg},
            "iterations": self.iterations,
            "elapsed": round(self.elapsed, 6),
            "table_size": self.table_size,
            "root": {repr(m): [n, v, round(w, 4)] for m, (n, v, w) in self.root_edges.items()},
        }


def run_search(root: GameState, cfg: SearchConfig,
               tt: Optional[TranspositionTable] = None,
               evaluator: Optional[StateEvaluator] = None,
               simulation_policy: Optional[Callable] = None) -> SearchResult:
    """Full search from ``root``; returns the chosen action plus diagnostics.

    A fresh transposition table is used unless one is passed in (tree reuse
    across decisions is off by default to keep experiments independent)."""
    t0 = time.perf_counter()
    codes = legal_codes(root)
    if not codes:
        raise ValueError("run_search on a terminal state")
    if tt is None:
        tt = TranspositionTable()

    out = lambda action, iters: SearchResult(
        action, iters, time.perf_counter() - t0, len(tt),
        root_edges=_root_table(tt.get(capture(root, root.active))))

    if len(codes) == 1 or cfg.iterations <= 0 and cfg.time_limit is None:
        return out(Action.from_code(codes[0]), 0)

    stream = SplitMix64(cfg.seed)
    root_is = capture(root, root.active)
    root_node = tt.find_or_create(root_is, acting=root.active)
    cutoff = None
    if cfg.cutoff_min_steps > 0 and evaluator is not None:
        cutoff = EarlyCutoff(cfg.cutoff_min_steps, evaluator.score_vector)

    deadline = None if cfg.time_limit is None else t0 + cfg.time_limit
    iters = 0
    while True:
        if deadline is not None:
            if time.perf_counter() >= deadline:
                break
        elif iters >= cfg.iterations:
            break
        iters += 1

        moving = root.clone()
        if cfg.determinization == Determinization.RANDOM:
            K.determinize_random(moving.array, moving.active, np.int64(np.uint64(stream.u64())))
        # fresh chance stream per iteration: future random outcomes are
        # hidden information too, resampled like the zones
        moving.rng_state = stream.u64()

        node = root_node
        path: list[tuple[Edge, int]] = []
        while True:
            edge, moving, _ = select(node, moving, cfg, tt, evaluator)
            path.append((edge, node.acting))
            if moving.terminal or edge.visits == 1:
                break
            node = edge.next_node

        if moving.terminal:
            score = result(moving)
        elif simulation_policy is not None:
            score, _ = random_playout(moving, simulation_policy, cutoff)
        else:
            finished, _ = K.playout_uniform(
                moving.array, moving.pool.table, moving.pool.spell_ids,
                cutoff.min_steps if cutoff is not None else 0)
            score = result(moving) if finished else cutoff.evaluate(moving)
        backpropagate(path, score)

    # robust child: maximum visit count, ties to the lowest action ordinal
    best_code = None
    best_v = -1
    for i in range(root_node.count):
        code = int(root_node.codes[i])
        v = int(root_node.visits[i])
        if v > best_v or (v == best_v and (best_code is None or code < best_code)):
            best_v = v
            best_code = code
    if best_code is None:
        best_code = codes[0]
    return out(Action.from_code(best_code), iters)


def _root_table(node: Optional[Node]) -> dict[Action, tuple[int, int, float]]:
    if node is None:
        return {}
    return {Action.from_code(int(node.codes[i])): (int(node.n_obs[i]), int(node.visits[i]), float(node.wins[i]))
            for i in range(node.count)}


def iterate(root: GameState, cfg: SearchConfig,
            tt: Optional[TranspositionTable] = None,
            evaluator: Optional[StateEvaluator] = None,
            simulation_policy: Optional[Callable] = None) -> Action:
    """Search and return the best action (visit-count maximizer)."""
    return run_search(root, cfg, tt, evaluator, simulation_policy).action
