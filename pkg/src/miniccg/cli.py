"""Command-line entry point.

One binary, subcommand style: bench, selfplay, train, rate, match, play,
embed, solve.  Every command takes ``--config`` (JSON, schema in
miniccg.config) plus a few flag overrides, prints the master seed it runs
under, writes progress to stderr and results to files/stdout.  Worker count
comes from --workers / config / the MINICCG_WORKERS environment variable.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import engine
from . import kernels as K
from .cards import default_pool
from .config import RunConfig, load_config
from .engine import Action, ActionKind, ConfigError, GameLogger, GameState
from .features import train_embeddings
from .infoset import capture
from .pipeline import (Bot, BotSpec, SampleBuffer, game_seeds, harvest,
                       iterate_learning, rate_generations, run_games,
                       run_match_table)
from .rng import mix64


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.master_seed = args.seed
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    _err(f"master seed: {cfg.master_seed}")
    return cfg


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------

def cmd_bench(args) -> int:
    cfg = _load(args)
    pool = default_pool()
    d0 = np.array(pool.deck(cfg.deck_names[0]), dtype=np.int64)
    d1 = np.array(pool.deck(cfg.deck_names[1]), dtype=np.int64)
    K.bench_random_games(pool.table, pool.spell_ids, d0, d1, 10, cfg.master_seed)  # warm JIT

    games = steps = w0 = w1 = dr = 0
    block = 2000
    t0 = time.perf_counter()
    if args.games is not None:
        remaining = args.games
        while remaining > 0:
            n = min(block, remaining)
            s, a, b, d = K.bench_random_games(pool.table, pool.spell_ids, d0, d1,
                                              n, mix64(cfg.master_seed ^ games))
            games += n; steps += s; w0 += a; w1 += b; dr += d
            remaining -= n
    else:
        while time.perf_counter() - t0 < args.seconds:
            s, a, b, d = K.bench_random_games(pool.table, pool.spell_ids, d0, d1,
                                              block, mix64(cfg.master_seed ^ games))
            games += block; steps += s; w0 += a; w1 += b; dr += d
    elapsed = time.perf_counter() - t0
    gps = games / elapsed if elapsed > 0 and games else 0.0
    sps = steps / elapsed if elapsed > 0 else 0.0
    print(f"games: {games}  wins(p0/p1/draw): {w0}/{w1}/{dr}")
    print(f"elapsed: {elapsed:.2f}s  games/sec: {gps:,.0f}  states/sec: {sps:,.0f}")
    return 0


def cmd_selfplay(args) -> int:
    cfg = _load(args)
    out = _outdir(cfg)
    sp = cfg.selfplay
    buf = SampleBuffer(capacity=10_000_000)
    n = [0, 0, 0]
    for rec in run_games(sp.p1, sp.p2, sp.games, seed=cfg.master_seed,
                         deck_names=cfg.deck_names, collect=True, workers=cfg.workers):
        buf.extend(harvest([rec], p=sp.sample_p, seed=mix64(cfg.master_seed ^ 0x5A11)))
        n[0 if rec.score == (1.0, 0.0) else 1 if rec.score == (0.0, 1.0) else 2] += 1
        if (sum(n)) % 50 == 0:
            _err(f"{sum(n)}/{sp.games} games, {len(buf)} samples")
    path = out / sp.output
    buf.save(str(path))
    print(f"wrote {len(buf)} samples from {sp.games} games to {path} "
          f"(p0/p1/draw: {n[0]}/{n[1]}/{n[2]})")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    lc = cfg.learning
    if not Path(lc.out_dir).is_absolute():
        lc.out_dir = str(Path(cfg.output_dir) / lc.out_dir)
    if cfg.workers is not None:
        lc.workers = cfg.workers
    metrics = iterate_learning(lc, seed=cfg.master_seed, log=_err)
    for m in metrics:
        print(f"iteration {m.iteration}: games={m.games} buffer={m.buffer_size} "
              f"acc=({m.val_accuracy[0]:.3f}, {m.val_accuracy[1]:.3f}) -> {m.bundle_path}")
    return 0


def cmd_rate(args) -> int:
    cfg = _load(args)
    rc = cfg.rate
    bundles = rc.bundles or sorted(
        str(p) for p in (Path(cfg.output_dir) / "learning").glob("bundle_*.cfmb"))
    if len(bundles) < 2:
        raise ConfigError("rate needs at least two bundles (rate.bundles)")
    ranked = rate_generations(bundles, matches_per_pair=rc.matches_per_pair,
                              iterations=rc.iterations, seed=cfg.master_seed,
                              deck_names=cfg.deck_names, preset=rc.preset,
                              period=rc.period, workers=cfg.workers, log=_err)
    rows = [{"bundle": r.path,
             "rating": round(r.overall.rating, 1), "deviation": round(r.overall.deviation, 1),
             "as_first": round(r.as_first.rating, 1), "as_second": round(r.as_second.rating, 1),
             "games": r.games, "wins": r.wins} for r in ranked]
    best_first = max(ranked, key=lambda r: r.as_first.rating)
    best_second = max(ranked, key=lambda r: r.as_second.rating)
    payload = {"ranked": rows, "best_as_first": best_first.path,
               "best_as_second": best_second.path}
    path = _outdir(cfg) / rc.output
    path.write_text(json.dumps(payload, indent=2))
    for row in rows:
        print(f"{row['rating']:7.1f} +-{row['deviation']:5.1f}  {row['bundle']}")
    print(f"best as first: {best_first.path}")
    print(f"best as second: {best_second.path}")
    print(f"wrote {path}")
    return 0


def cmd_match(args) -> int:
    cfg = _load(args)
    mc = cfg.match
    if not mc.pairings:
        raise ConfigError("match.pairings is empty; nothing to play")
    pairings = [(p.p1, p.p2, p.games) for p in mc.pairings]
    table = run_match_table(pairings, seed=cfg.master_seed,
                            deck_names=cfg.deck_names, workers=cfg.workers, log=_err)
    out = _outdir(cfg)
    (out / f"{mc.output}.txt").write_text(table.to_text() + "\n")
    (out / f"{mc.output}.json").write_text(json.dumps(table.to_json(), indent=2))
    print(table.to_text())
    print(f"wrote {out / (mc.output + '.txt')} and {out / (mc.output + '.json')}")
    return 0


def cmd_embed(args) -> int:
    cfg = _load(args)
    table = train_embeddings(default_pool(), epochs=args.epochs,
                             seed=mix64(cfg.master_seed ^ 0xE3B))
    path = _outdir(cfg) / args.output
    path.write_bytes(table.to_bytes())
    print(f"trained {len(table)} card vectors (dim {table.dim}), "
          f"vocab {len(table.vocab)} tokens -> {path}")
    return 0


def cmd_solve(args) -> int:
    _load(args)
    from .heuristics import solve_board, board_potential
    with open(args.position) as fh:
        state = GameState.from_json(json.load(fh))
    actions = solve_board(state)
    print(f"active: player {state.active}  "
          f"potential: {board_potential(state, state.active):.1f} vs "
          f"{board_potential(state, 1 - state.active):.1f}")
    if not actions:
        print("no attacks available")
        return 0
    for i in range(0, len(actions), 2):
        att, dfn = actions[i], actions[i + 1]
        print(f"{i // 2 + 1}. {att.describe(state)} -> {dfn.describe(state)}")
        state = engine.apply(state, att)
        state = engine.apply(state, dfn)
    return 0


# ---------------------------------------------------------------------------
# Interactive play
# ---------------------------------------------------------------------------

def _render(state: GameState, human: int, reveal: bool) -> str:
    pool = state.pool
    lines = []
    opp = 1 - human
    po, ph = state.player(opp), state.player(human)
    lines.append(f"=== turn {state.turn} | {'YOUR' if state.active == human else 'BOT'} move ===")
    lines.append(f"bot   : {po.hero_hp:2d} hp  {po.mana}/{po.mana_max} mana  "
                 f"hand {len(po.hand)}  deck {len(po.deck)}")
    if reveal:
        lines.append(f"        (revealed hand: {[pool[c].name for c in po.hand]})")
    for s, m in enumerate(po.board):
        kw = "".join(k for k, f in (("T", m.taunt), ("C", m.charge)) if f)
        lines.append(f"   [{s}] {pool[m.card_id].name} {m.attack}/{m.health}{' ' + kw if kw else ''}")
    lines.append("   --- vs ---")
    for s, m in enumerate(ph.board):
        kw = "".join(k for k, f in (("T", m.taunt), ("C", m.charge)) if f)
        rdy = "*" if m.can_attack else " "
        lines.append(f"   [{s}]{rdy}{pool[m.card_id].name} {m.attack}/{m.health}{' ' + kw if kw else ''}")
    lines.append(f"you   : {ph.hero_hp:2d} hp  {ph.mana}/{ph.mana_max} mana  deck {len(ph.deck)}")
    lines.append("hand  : " + (", ".join(
        f"[{i}] {pool[c].name}({pool[c].cost})" for i, c in enumerate(ph.hand)) or "(empty)"))
    if state.phase == K.PH_DISCOVER and state.active == human:
        lines.append("discover: " + ", ".join(
            f"[{i}] {pool[c].name}" for i, c in enumerate(state.discover_options)))
    return "\n".join(lines)


def cmd_play(args) -> int:
    cfg = _load(args)
    human = args.side
    pool = default_pool()
    spec = BotSpec(preset=args.bot, iterations=args.iterations,
                   time_limit=args.time_limit, bundle_path=args.bundle)
    spec.validate()
    seed = cfg.master_seed
    decks = (pool.deck(cfg.deck_names[0]), pool.deck(cfg.deck_names[1]))
    state = engine.new_game(decks[0], decks[1], seed, pool)
    state.player(1 - human).solver_enabled = True  # bot may use the solver action
    state.player(human).solver_enabled = True
    bot = Bot(spec, seed=mix64(seed ^ 0xB07))
    out = _outdir(cfg)
    log_fh = open(out / "play_log.jsonl", "w")
    logger = GameLogger(log_fh)

    try:
        while not state.terminal:
            if state.active == human:
                print(_render(state, human, args.reveal))
                moves = engine.legal_moves(state)
                for i, m in enumerate(moves):
                    print(f"  {i}) {m.describe(state)}")
                print("  c) concede")
                raw = input("> ").strip().lower()
                if raw in ("c", "concede"):
                    print("you concede.")
                    state.player(human).hero_hp = 0
                    state.array[K.G_RESULT] = 1 - human  # opponent wins
                    break
                try:
                    choice = moves[int(raw)]
                except (ValueError, IndexError):
                    print("not a menu entry; pick a number from the list.")
                    continue
                before = state.clone()
                state = engine.apply(state, choice)
                logger.record(before, choice, state)
            else:
                t0 = time.perf_counter()
                code = bot.decide(state)
                action = Action.from_code(code)
                print(f"bot plays: {action.describe(state)}  "
                      f"({time.perf_counter() - t0:.2f}s)")
                before = state.clone()
                state = engine.apply(state, action)
                logger.record(before, action, state)
        score = engine.result(state)
        if score is None:
            pass
        elif score[human] > score[1 - human]:
            print("you win!")
        elif score[human] < score[1 - human]:
            print("you lose.")
        else:
            print("draw (turn limit).")
    except EOFError:
        print("\n(input closed; conceding)")
        state.array[K.G_RESULT] = 1 - human
    finally:
        log_fh.close()
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="miniccg",
        description="MiniCCG: simulator, search bots, and the training pipeline")
    ap.set_defaults(func=None)
    sub = ap.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", help="JSON run configuration (see miniccg.config)")
        p.add_argument("--seed", type=int, help="override master seed")
        p.add_argument("--workers", type=int, help="worker processes (or MINICCG_WORKERS)")

    p = sub.add_parser("bench", help="measure raw playout throughput")
    common(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--games", type=int, help="play a fixed number of games")
    g.add_argument("--seconds", type=float, default=30.0, help="or run for this long")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("selfplay", help="generate games and write a dataset")
    common(p)
    p.set_defaults(func=cmd_selfplay)

    p = sub.add_parser("train", help="run the iterative learning loop")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rate", help="rank model bundles by round-robin rating")
    common(p)
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("match", help="play the configured pairings and tabulate")
    common(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("embed", help="train card embeddings")
    common(p)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--output", default="embeddings.cfem")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("solve", help="run the board solver on a position file")
    common(p)
    p.add_argument("position", help="JSON game state (GameState.to_json format)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("play", help="interactive game against a bot")
    common(p)
    p.add_argument("--side", type=int, choices=(0, 1), default=0, help="your seat")
    p.add_argument("--bot", default="mcts", help="bot preset")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--bundle", help="model bundle for value-network presets")
    p.add_argument("--reveal", action="store_true",
                   help="debug: show hidden opponent zones")
    p.set_defaults(func=cmd_play)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.func is None:
        ap.print_help()
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return 2
    except KeyboardInterrupt:
        _err("interrupted")
        return 130


if __name__ == "__main__":
    raise SystemExit(main())
