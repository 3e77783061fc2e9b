"""Search enhancements: board solver, tree/simulation policy bias, early cutoff.

The board solver turns the combinatorial attack-ordering subproblem into a
single "use solver" action: lethal if one exists, defusing trades when the
opponent threatens lethal, otherwise greedy potential trades.  The bias
helpers inject a state evaluator (normally the value network) into the tree
policy, the simulation policy, or as an early simulation terminator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels as K
from . import engine
from .engine import Action, ActionKind, GameState
from .rng import SplitMix64
from .search import Edge, StateEvaluator, uct_score


@dataclass
class BiasConfig:
    """Weights of the evaluator-driven enhancements.

    tree_bias_weight scales the decaying bias term added to UCT; epsilon is
    the probability of picking the greedy move in epsilon-greedy rollouts;
    cutoff_min_steps is the earliest simulation step at which an end of turn
    may terminate the rollout."""

    tree_bias_weight: float = 1.0
    epsilon: float = 0.7
    boltzmann_temp: float = 0.25
    cutoff_min_steps: int = 20
    policy: str = "uniform"  # uniform | epsilon_greedy | boltzmann


def board_potential(state: GameState, player: int) -> float:
    """Material count of one side: sum of (attack + health) over the board
    plus half the hero's hp."""
    return K.potential2(state.array, player) / 2.0


def solve_board(state: GameState) -> list[Action]:
    """Attack sequence for the active player, as alternating
    CHOOSE_ATTACKER / CHOOSE_DEFENDER actions, each legal at its point of
    application. Empty when no attack is available."""
    pairs = np.empty((K.SOLVER_PAIR_CAP, 2), dtype=np.int64)
    n = K.solve_board_pairs(state.array, state.pool.table, pairs)
    out: list[Action] = []
    for i in range(n):
        out.append(Action(ActionKind.CHOOSE_ATTACKER, int(pairs[i, 0])))
        out.append(Action(ActionKind.CHOOSE_DEFENDER, int(pairs[i, 1])))
    return out


def use_solver_action(state: GameState) -> GameState:
    """Apply the solver's whole attack sequence as one action."""
    return engine.apply(state, Action(ActionKind.USE_SOLVER))


def progressive_bias_score(edge: Edge, node_visits: int, h: float,
                           cfg: BiasConfig, c: float) -> float:
    """UCT plus a heuristic term W*h/(V+1) that fades as the edge gathers
    visits, handing control back to the statistics."""
    return uct_score(edge, node_visits, c) + cfg.tree_bias_weight * h / (edge.visits + 1)


def biased_policy_choose(state: GameState, moves: Sequence[Action], cfg: BiasConfig,
                         evaluator: Optional[StateEvaluator],
                         rng: SplitMix64) -> Action:
    """Pick a simulation move under the configured policy.

    epsilon_greedy: with probability epsilon take the move whose one-step
    successor the evaluator likes best for the mover (ties to the lowest
    action ordinal), otherwise uniform.  boltzmann: sample with probability
    proportional to exp(value / T).  Without an evaluator both degrade to
    uniform."""
    if cfg.policy == "uniform" or evaluator is None or len(moves) == 1:
        return moves[rng.below(len(moves))]
    mover = state.active
    values = [evaluator.score_vector(engine.apply(state, m))[mover] for m in moves]
    if cfg.policy == "epsilon_greedy":
        if rng.uniform() < cfg.epsilon:
            best = 0
            for i in range(1, len(moves)):
                if values[i] > values[best] or (values[i] == values[best]
                                                and moves[i].code < moves[best].code):
                    best = i
            return moves[best]
        return moves[rng.below(len(moves))]
    if cfg.policy == "boltzmann":
        top = max(values)
        weights = [math.exp((v - top) / cfg.boltzmann_temp) for v in values]
        total = sum(weights)
        u = rng.uniform() * total
        acc = 0.0
        for m, w in zip(moves, weights):
            acc += w
            if u < acc:
                return m
        return moves[-1]
    raise ValueError(f"unknown simulation policy {cfg.policy!r}")


def make_simulation_policy(cfg: BiasConfig, evaluator: Optional[StateEvaluator],
                           seed: int = 0) -> Optional[Callable]:
    """A (state, moves) -> move callable for engine.random_playout, or None
    for the fast uniform path."""
    if cfg.policy == "uniform" or evaluator is None:
        return None
    rng = SplitMix64(seed)
    return lambda state, moves: biased_policy_choose(state, moves, cfg, evaluator, rng)


def early_cutoff_evaluate(state: GameState, steps: int, last_action: Optional[Action],
                          cfg: BiasConfig, net: StateEvaluator) -> Optional[tuple[float, float]]:
    """Early-cutoff rule: once at least cutoff_min_steps simulation steps
    have been played and the last move ended a turn, return the evaluator's
    predicted score vector; otherwise None to keep simulating."""
    if steps < cfg.cutoff_min_steps:
        return None
    if last_action is None or last_action.kind != ActionKind.END_TURN:
        return None
    if state.terminal:
        return None
    return net.score_vector(state)


@dataclass(frozen=True)
class AgentPreset:
    """Which enhancements an agent preset switches on."""

    name: str
    search: bool  # False = pick uniformly at random
    solver: bool  # the artificial use-solver action is offered to this side
    value_net: bool  # progressive bias + early cutoff through the bundle's networks


PRESETS: dict[str, AgentPreset] = {
    "random": AgentPreset("random", search=False, solver=False, value_net=False),
    "mcts": AgentPreset("mcts", search=True, solver=False, value_net=False),
    "mctsV": AgentPreset("mctsV", search=True, solver=False, value_net=True),
    "mctsS": AgentPreset("mctsS", search=True, solver=True, value_net=False),
    "mctsVS": AgentPreset("mctsVS", search=True, solver=True, value_net=True),
}
