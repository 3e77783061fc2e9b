"""Self-play data generation, iterative training, rating and match tables.

Games parallelize across a process pool; every game is a pure function of
its own seed, so results are identical no matter how workers are scheduled.
The FIFO sample buffer holds one entry per harvested state with the feature
vectors of both player positions; the two position networks are retrained
from scratch on its contents each iteration.

Dataset file format (little-endian): magic ``CFDS``, version u32,
length-prefixed layout-version string, sample count u64, then fixed-size
records: 372 float32 features for each position, 2 float32 scores
(player-0 first), and u32 meta (generation, game, turn).
"""

from __future__ import annotations

import json
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

from . import engine
from . import kernels as K
from .bundle import BundleEvaluator, ModelBundle
from .cards import CardPool, default_pool
from .engine import GameState, legal_codes
from .features import DEFAULT_LAYOUT, EmbeddingTable, train_embeddings, vectorize
from .glicko import GlickoRating, glicko2_update
from .heuristics import PRESETS, BiasConfig, make_simulation_policy
from .infoset import Determinization
from .neural import ValueNetwork, train_epochs
from .rng import SplitMix64, mix64
from .search import SearchConfig, run_search

DATASET_MAGIC = b"CFDS"
DATASET_VERSION = 1


def worker_count() -> int:
    env = os.environ.get("MINICCG_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# Bots
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BotSpec:
    """Recipe for one agent: preset, budget, model bundle, determinization."""

    preset: str = "mcts"
    iterations: int = 1000
    time_limit: Optional[float] = None
    bundle_path: Optional[str] = None
    determinization: Determinization = Determinization.RANDOM
    exploration: float = 2.0 ** 0.5
    tree_bias_weight: float = 1.0
    cutoff_min_steps: int = 20
    sim_policy: str = "uniform"
    epsilon: float = 0.7
    boltzmann_temp: float = 0.25

    def validate(self) -> None:
        if self.preset not in PRESETS:
            raise engine.ConfigError(
                f"unknown preset {self.preset!r}; available: {sorted(PRESETS)}")
        if PRESETS[self.preset].value_net and not self.bundle_path:
            raise engine.ConfigError(
                f"preset {self.preset!r} needs a model bundle: set bundle_path")

    @property
    def label(self) -> str:
        return self.preset


_BUNDLE_CACHE: dict[str, ModelBundle] = {}


def load_bundle_cached(path: str) -> ModelBundle:
    bundle = _BUNDLE_CACHE.get(path)
    if bundle is None:
        bundle = ModelBundle.load(path)
        _BUNDLE_CACHE[path] = bundle
    return bundle


class Bot:
    """A playable agent; decisions are deterministic given the seed."""

    def __init__(self, spec: BotSpec, seed: int):
        spec.validate()
        self.spec = spec
        self.preset = PRESETS[spec.preset]
        self.stream = SplitMix64(seed)
        self.evaluator = None
        if self.preset.value_net:
            self.evaluator = BundleEvaluator(load_bundle_cached(spec.bundle_path))

    def decide(self, state: GameState) -> int:
        codes = legal_codes(state)
        if not self.preset.search:
            return codes[self.stream.below(len(codes))]
        if len(codes) == 1:
            return codes[0]
        spec = self.spec
        cfg = SearchConfig(
            exploration=spec.exploration,
            iterations=spec.iterations,
            time_limit=spec.time_limit,
            determinization=spec.determinization,
            tree_bias_weight=spec.tree_bias_weight if self.evaluator else 0.0,
            cutoff_min_steps=spec.cutoff_min_steps if self.evaluator else 0,
            seed=self.stream.u64(),
        )
        policy = None
        if spec.sim_policy != "uniform" and self.evaluator is not None:
            bias = BiasConfig(policy=spec.sim_policy, epsilon=spec.epsilon,
                              boltzmann_temp=spec.boltzmann_temp)
            policy = make_simulation_policy(bias, self.evaluator, seed=self.stream.u64())
        return run_search(state, cfg, evaluator=self.evaluator,
                          simulation_policy=policy).action.code


# ---------------------------------------------------------------------------
# Playing games
# ---------------------------------------------------------------------------

@dataclass
class GameRecord:
    """One finished game: outcome plus (optionally) the per-step feature
    vectors from both player positions."""

    game_index: int
    seed: int
    score: tuple[float, float]
    n_steps: int
    turns: Optional[np.ndarray] = None       # (n_states,) int32
    features: Optional[tuple[np.ndarray, np.ndarray]] = None  # per position


def play_game(spec0: BotSpec, spec1: BotSpec, seed: int, game_index: int = 0,
              decks: tuple[Sequence[int], Sequence[int]] | None = None,
              collect: bool = False, pool: CardPool | None = None) -> GameRecord:
    """Play one seeded game. The solver action is offered per side according
    to each bot's preset; vectorized states are recorded when ``collect``."""
    pool = pool or default_pool()
    if decks is None:
        decks = (pool.deck("aggro"), pool.deck("control"))
    state = engine.new_game(decks[0], decks[1], seed, pool)
    state.player(0).solver_enabled = PRESETS[spec0.preset].solver
    state.player(1).solver_enabled = PRESETS[spec1.preset].solver
    bots = (Bot(spec0, seed=mix64(seed ^ 0x1111)), Bot(spec1, seed=mix64(seed ^ 0x2222)))

    emb = None
    feats: tuple[list, list] = ([], [])
    turns: list[int] = []
    if collect:
        for b in bots:
            if b.evaluator is not None:
                emb = b.evaluator.bundle.embeddings
                break
        if emb is None:
            emb = EmbeddingTable.zeros(len(pool))

        def snap(s: GameState) -> None:
            turns.append(s.turn)
            feats[0].append(vectorize(s, 0, DEFAULT_LAYOUT, emb))
            feats[1].append(vectorize(s, 1, DEFAULT_LAYOUT, emb))

        snap(state)

    steps = 0
    while not state.terminal:
        code = bots[state.active].decide(state)
        engine.apply_inplace(state, code)
        steps += 1
        if collect and not state.terminal:
            snap(state)

    score = engine.result(state)
    if collect:
        return GameRecord(game_index, seed, score, steps,
                          np.array(turns, dtype=np.int32),
                          (np.array(feats[0], dtype=np.float32),
                           np.array(feats[1], dtype=np.float32)))
    return GameRecord(game_index, seed, score, steps)


def _game_task(args) -> GameRecord:
    spec0, spec1, seed, index, deck_names, collect = args
    pool = default_pool()
    decks = (pool.deck(deck_names[0]), pool.deck(deck_names[1]))
    return play_game(spec0, spec1, seed, index, decks, collect, pool)


def game_seeds(master_seed: int, n: int) -> list[int]:
    stream = SplitMix64(master_seed)
    return [stream.u64() for _ in range(n)]


def run_games(spec0: BotSpec, spec1: BotSpec, n_games: int, seed: int,
              deck_names: tuple[str, str] = ("aggro", "control"),
              collect: bool = False, workers: Optional[int] = None,
              progress: Optional[Callable[[GameRecord], None]] = None) -> Iterator[GameRecord]:
    """Yield game records in game-index order, farming games out to a
    process pool. Deterministic for a fixed seed regardless of scheduling."""
    seeds = game_seeds(seed, n_games)
    tasks = [(spec0, spec1, seeds[i], i, deck_names, collect) for i in range(n_games)]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or n_games <= 1:
        for t in tasks:
            rec = _game_task(t)
            if progress:
                progress(rec)
            yield rec
        return
    with ProcessPoolExecutor(max_workers=workers) as ex:
        for rec in ex.map(_game_task, tasks, chunksize=max(1, min(8, n_games // (4 * workers) or 1))):
            if progress:
                progress(rec)
            yield rec


def generate_games(bot0: BotSpec, bot1: BotSpec, n_games: int, seed: int,
                   deck_names: tuple[str, str] = ("aggro", "control"),
                   collect: bool = True, workers: Optional[int] = None) -> list[GameRecord]:
    """Play ``n_games`` independent seeded games and return their records."""
    return list(run_games(bot0, bot1, n_games, seed, deck_names, collect, workers))


# ---------------------------------------------------------------------------
# Samples and the FIFO buffer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainingSample:
    """One harvested state: both positions' feature vectors and the final
    score (player-0 first)."""

    features: tuple[np.ndarray, np.ndarray]
    score: tuple[float, float]
    generation: int
    game: int
    turn: int


def harvest(records: Iterable[GameRecord], p: float = 0.5, seed: int = 0,
            generation: int = 0) -> list[TrainingSample]:
    """Keep each recorded state independently with probability ``p``.

    Draws come from a per-game stream derived from (seed, game index), so
    harvesting game by game or in one batch selects identical states."""
    if not (0.0 < p <= 1.0):
        raise ValueError(f"sampling probability must be in (0, 1], got {p}")
    out: list[TrainingSample] = []
    for rec in records:
        if rec.features is None:
            raise ValueError("harvest needs records generated with collect=True")
        stream = SplitMix64(mix64(seed ^ mix64(rec.game_index + 0x5EED)))
        f0, f1 = rec.features
        for i in range(len(f0)):
            if p >= 1.0 or stream.uniform() < p:
                out.append(TrainingSample(
                    (f0[i], f1[i]), rec.score, generation,
                    rec.game_index, int(rec.turns[i])))
    return out


class SampleBuffer:
    """Bounded FIFO over harvested states, stored as flat arrays."""

    def __init__(self, capacity: int = 100_000, dim: int = DEFAULT_LAYOUT.total_dim):
        self.capacity = capacity
        self.dim = dim
        self.features = np.zeros((capacity, 2, dim), dtype=np.float32)
        self.scores = np.zeros((capacity, 2), dtype=np.float32)
        self.meta = np.zeros((capacity, 3), dtype=np.uint32)  # generation, game, turn
        self.start = 0
        self.length = 0

    def __len__(self) -> int:
        return self.length

    def append(self, sample: TrainingSample) -> None:
        idx = (self.start + self.length) % self.capacity
        if self.length == self.capacity:
            self.start = (self.start + 1) % self.capacity  # evict oldest
        else:
            self.length += 1
        self.features[idx, 0] = sample.features[0]
        self.features[idx, 1] = sample.features[1]
        self.scores[idx] = sample.score
        self.meta[idx] = (sample.generation, sample.game, sample.turn)

    def extend(self, samples: Iterable[TrainingSample]) -> None:
        for s in samples:
            self.append(s)

    def _order(self) -> np.ndarray:
        return (self.start + np.arange(self.length)) % self.capacity

    def dataset(self, position: int) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) for one position's network, oldest first; targets are
        (own score, opponent score) from that position's perspective."""
        idx = self._order()
        X = self.features[idx, position]
        s = self.scores[idx]
        Y = s if position == 0 else s[:, ::-1]
        return X, np.ascontiguousarray(Y)

    def meta_fifo(self) -> np.ndarray:
        return self.meta[self._order()]

    # -- persistence --------------------------------------------------------

    def save(self, path: str) -> None:
        idx = self._order()
        with open(path, "wb") as fh:
            lv = DEFAULT_LAYOUT.version.encode()
            fh.write(DATASET_MAGIC + struct.pack("<I", DATASET_VERSION))
            fh.write(struct.pack("<H", len(lv)) + lv)
            fh.write(struct.pack("<Q", self.length))
            fh.write(np.ascontiguousarray(self.features[idx], dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(self.scores[idx], dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(self.meta[idx], dtype="<u4").tobytes())

    @staticmethod
    def load(path: str, capacity: Optional[int] = None) -> "SampleBuffer":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:4] != DATASET_MAGIC:
            raise engine.ConfigError(f"{path}: not a dataset file")
        (version,) = struct.unpack_from("<I", blob, 4)
        if version != DATASET_VERSION:
            raise engine.ConfigError(f"{path}: unsupported dataset version {version}")
        (lv_len,) = struct.unpack_from("<H", blob, 8)
        off = 10
        layout_version = blob[off:off + lv_len].decode()
        if layout_version != DEFAULT_LAYOUT.version:
            raise engine.ConfigError(
                f"{path}: layout {layout_version!r} != vectorizer {DEFAULT_LAYOUT.version!r}")
        off += lv_len
        (n,) = struct.unpack_from("<Q", blob, off)
        off += 8
        dim = DEFAULT_LAYOUT.total_dim
        buf = SampleBuffer(capacity=capacity or max(n, 1), dim=dim)
        fbytes = n * 2 * dim * 4
        feats = np.frombuffer(blob, dtype="<f4", count=n * 2 * dim, offset=off).reshape(n, 2, dim)
        off += fbytes
        scores = np.frombuffer(blob, dtype="<f4", count=n * 2, offset=off).reshape(n, 2)
        off += n * 2 * 4
        meta = np.frombuffer(blob, dtype="<u4", count=n * 3, offset=off).reshape(n, 3)
        take = min(n, buf.capacity)
        src = slice(n - take, n)  # newest survive when capacity shrank
        buf.features[:take] = feats[src]
        buf.scores[:take] = scores[src]
        buf.meta[:take] = meta[src]
        buf.length = take
        buf.start = 0
        return buf


# ---------------------------------------------------------------------------
# Iterative learning
# ---------------------------------------------------------------------------

@dataclass
class LearningConfig:
    out_dir: str = "runs/learning"
    bootstrap_games: int = 2000
    iterations: int = 10
    games_per_iteration: int = 500
    buffer_capacity: int = 100_000
    sample_p: float = 0.5
    epochs: int = 15
    batch: int = 256
    learning_rate: float = 0.001
    deck_names: tuple[str, str] = ("aggro", "control")
    bootstrap_bot: BotSpec = field(default_factory=lambda: BotSpec(
        preset="mcts", iterations=300, determinization=Determinization.CHEATER))
    selfplay_preset: str = "mctsV"
    selfplay_iterations: int = 300
    workers: Optional[int] = None
    embedding_epochs: int = 300


@dataclass
class IterationMetrics:
    iteration: int
    games: int
    buffer_size: int
    val_accuracy: tuple[float, float]
    bundle_path: str
    p0_wins: int = 0
    p1_wins: int = 0
    draws: int = 0


def _train_bundle(buf: SampleBuffer, emb: EmbeddingTable, cfg: LearningConfig,
                  seed: int, iteration: int) -> tuple[ModelBundle, tuple[float, float]]:
    accs = []
    nets = []
    for pos in range(2):
        X, Y = buf.dataset(pos)
        proto = ValueNetwork(DEFAULT_LAYOUT.total_dim, init=False)
        res = train_epochs(proto, (X, Y), split=0.8, batch=cfg.batch,
                           epochs=cfg.epochs, lr=cfg.learning_rate,
                           seed=mix64(seed ^ (iteration * 2 + pos + 0xA11CE)))
        nets.append(res.net)
        accs.append(res.val_accuracy)
    return ModelBundle((nets[0], nets[1]), emb), (accs[0], accs[1])


def iterate_learning(cfg: LearningConfig, seed: int = 1,
                     log: Callable[[str], None] = lambda s: None) -> list[IterationMetrics]:
    """Bootstrap from plain search, then alternate self-play generation and
    from-scratch retraining. Emits bundle_###.cfmb per iteration plus a
    metrics file; an interrupted run resumes after the last finished
    iteration from the persisted buffer."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.json"
    buffer_path = out / "buffer.cfds"

    done: list[IterationMetrics] = []
    if metrics_path.exists():
        for row in json.loads(metrics_path.read_text())["iterations"]:
            done.append(IterationMetrics(**{**row, "val_accuracy": tuple(row["val_accuracy"])}))

    emb_seed = mix64(seed ^ 0xE3B)
    emb = train_embeddings(default_pool(), epochs=cfg.embedding_epochs, seed=emb_seed)

    if done:
        buf = SampleBuffer.load(str(buffer_path), capacity=cfg.buffer_capacity)
        log(f"resuming after iteration {done[-1].iteration} (buffer {len(buf)})")
    else:
        buf = SampleBuffer(capacity=cfg.buffer_capacity)

    def save_metrics() -> None:
        metrics_path.write_text(json.dumps({
            "iterations": [
                {**vars(m), "val_accuracy": list(m.val_accuracy)} for m in done
            ]}, indent=2))

    def play_round(iteration: int, spec0: BotSpec, spec1: BotSpec, n_games: int) -> tuple[int, int, int]:
        tally = [0, 0, 0]
        kept = 0
        for rec in run_games(spec0, spec1, n_games,
                             seed=mix64(seed ^ (0xBEEF + iteration)),
                             deck_names=cfg.deck_names, collect=True, workers=cfg.workers):
            samples = harvest([rec], p=cfg.sample_p,
                              seed=mix64(seed ^ 0x5A11), generation=iteration)
            kept += len(samples)
            buf.extend(samples)
            if rec.score == (1.0, 0.0):
                tally[0] += 1
            elif rec.score == (0.0, 1.0):
                tally[1] += 1
            else:
                tally[2] += 1
        log(f"iteration {iteration}: {n_games} games, kept {kept} states, buffer {len(buf)}")
        return tuple(tally)

    start = len(done)
    for iteration in range(start, cfg.iterations + 1):
        if iteration == 0:
            w = play_round(0, cfg.bootstrap_bot, cfg.bootstrap_bot, cfg.bootstrap_games)
            games = cfg.bootstrap_games
        else:
            prev_bundle = done[iteration - 1].bundle_path
            spec = BotSpec(preset=cfg.selfplay_preset,
                           iterations=cfg.selfplay_iterations,
                           determinization=Determinization.CHEATER,
                           bundle_path=prev_bundle)
            w = play_round(iteration, spec, spec, cfg.games_per_iteration)
            games = cfg.games_per_iteration
        bundle, accs = _train_bundle(buf, emb, cfg, seed, iteration)
        bundle_path = str(out / f"bundle_{iteration:03d}.cfmb")
        bundle.save(bundle_path)
        buf.save(str(buffer_path))
        done.append(IterationMetrics(iteration, games, len(buf), accs, bundle_path,
                                     p0_wins=w[0], p1_wins=w[1], draws=w[2]))
        save_metrics()
        log(f"iteration {iteration}: accuracy p0={accs[0]:.3f} p1={accs[1]:.3f} -> {bundle_path}")
    return done


# ---------------------------------------------------------------------------
# Rating bot generations
# ---------------------------------------------------------------------------

@dataclass
class RatedBundle:
    path: str
    overall: GlickoRating
    as_first: GlickoRating
    as_second: GlickoRating
    games: int = 0
    wins: float = 0.0


def rate_generations(bundle_paths: Sequence[str], matches_per_pair: int = 100,
                     iterations: int = 300, seed: int = 7,
                     deck_names: tuple[str, str] = ("aggro", "control"),
                     preset: str = "mctsV", period: int = 50,
                     workers: Optional[int] = None,
                     play: Optional[Callable[[int, int, int], float]] = None,
                     log: Callable[[str], None] = lambda s: None) -> list[RatedBundle]:
    """Round-robin the bundles, rate them with Glicko-2 in fixed periods of
    ``period`` games, and return them ranked best first (per-seat ratings
    reported separately). ``play(i, j, seed) -> score for i`` can replace
    real games in tests."""
    if len(bundle_paths) < 2:
        raise ValueError("need at least two bundles to rate")
    rated = [RatedBundle(p, GlickoRating(), GlickoRating(), GlickoRating())
             for p in bundle_paths]

    if play is None:
        def play(i: int, j: int, game_seed: int) -> float:
            rec = play_game(
                BotSpec(preset=preset, iterations=iterations, bundle_path=bundle_paths[i]),
                BotSpec(preset=preset, iterations=iterations, bundle_path=bundle_paths[j]),
                seed=game_seed,
                decks=(default_pool().deck(deck_names[0]), default_pool().deck(deck_names[1])))
            return rec.score[0]

    stream = SplitMix64(seed)
    schedule = []
    for i in range(len(rated)):
        for j in range(i + 1, len(rated)):
            for g in range(matches_per_pair):
                a, b = (i, j) if g % 2 == 0 else (j, i)
                schedule.append((a, b, stream.u64()))
    # deterministic interleave so rating periods mix opponents
    stream.shuffle(schedule)

    pending: list[tuple[int, int, float]] = []  # (first, second, score for first)

    def flush() -> None:
        if not pending:
            return
        per: dict[tuple[int, str], list] = {}
        snapshot = {k: (r.overall, r.as_first, r.as_second) for k, r in enumerate(rated)}
        for a, b, s in pending:
            per.setdefault((a, "overall"), []).append((snapshot[b][0], s))
            per.setdefault((b, "overall"), []).append((snapshot[a][0], 1.0 - s))
            per.setdefault((a, "first"), []).append((snapshot[b][0], s))
            per.setdefault((b, "second"), []).append((snapshot[a][0], 1.0 - s))
        for (k, kind), results in per.items():
            r = rated[k]
            if kind == "overall":
                r.overall = glicko2_update(r.overall, results)
            elif kind == "first":
                r.as_first = glicko2_update(r.as_first, results)
            else:
                r.as_second = glicko2_update(r.as_second, results)
        pending.clear()

    done_ct = 0
    for a, b, game_seed in schedule:
        s = play(a, b, game_seed)
        rated[a].games += 1
        rated[b].games += 1
        rated[a].wins += s
        rated[b].wins += 1.0 - s
        pending.append((a, b, s))
        done_ct += 1
        if len(pending) >= period:
            flush()
            log(f"rated {done_ct}/{len(schedule)} games")
    flush()
    return sorted(rated, key=lambda r: r.overall.rating, reverse=True)


# ---------------------------------------------------------------------------
# Match tables
# ---------------------------------------------------------------------------

@dataclass
class MatchRow:
    p1: str
    p1_wins: int
    p2_wins: int
    draws: int
    games: int
    p2: str

    @property
    def p1_pct(self) -> float:
        return 100.0 * self.p1_wins / self.games if self.games else 0.0

    @property
    def p2_pct(self) -> float:
        return 100.0 * self.p2_wins / self.games if self.games else 0.0


@dataclass
class MatchTable:
    rows: list[MatchRow]

    def to_json(self) -> dict:
        return {"rows": [
            {"p1": r.p1, "p1_wins": r.p1_wins, "p2_wins": r.p2_wins,
             "p1_win_pct": round(r.p1_pct, 1), "p2_win_pct": round(r.p2_pct, 1),
             "draws": r.draws, "games": r.games, "p2": r.p2}
            for r in self.rows]}

    def to_text(self) -> str:
        header = f"{'P1':<10} {'P1 wins':>8} {'P2 wins':>8} {'P1 win %':>9} {'P2 win %':>9}  {'P2':<10} {'draws':>6}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            lines.append(f"{r.p1:<10} {r.p1_wins:>8} {r.p2_wins:>8} "
                         f"{r.p1_pct:>8.1f}% {r.p2_pct:>8.1f}%  {r.p2:<10} {r.draws:>6}")
        return "\n".join(lines)


def run_match_table(pairings: Sequence[tuple[BotSpec, BotSpec, int]], seed: int = 1,
                    deck_names: tuple[str, str] = ("aggro", "control"),
                    workers: Optional[int] = None,
                    log: Callable[[str], None] = lambda s: None) -> MatchTable:
    """Play every pairing and tabulate absolute wins and percentages; draws
    are reported in their own column."""
    rows = []
    for k, (spec0, spec1, n_games) in enumerate(pairings):
        w0 = w1 = dr = 0
        for rec in run_games(spec0, spec1, n_games, seed=mix64(seed ^ (k + 0x7AB1E)),
                             deck_names=deck_names, collect=False, workers=workers):
            if rec.score == (1.0, 0.0):
                w0 += 1
            elif rec.score == (0.0, 1.0):
                w1 += 1
            else:
                dr += 1
        rows.append(MatchRow(spec0.label, w0, w1, dr, n_games, spec1.label))
        log(f"pairing {k}: {spec0.label} vs {spec1.label}: {w0}-{w1} ({dr} draws)")
    return MatchTable(rows)
