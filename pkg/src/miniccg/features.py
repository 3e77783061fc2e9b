"""Card embeddings and state vectorization.

Card vectors come from a skip-gram model with negative sampling trained on
the short card texts, then aggregated per card as the mean of its token
vectors (clamped to [-1, 1]).  The vectorizer packs one fixed 372-element
float32 layout per (state, perspective): a global segment, per-player
scalars, per-board-slot blocks and own-hand blocks, perspective side first,
absent slots zeroed, everything normalized into [-1, 1].  Opponent hand
identities never enter the vector — only the count does.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .cards import CardDef, CardPool
from .engine import GameState

EMBEDDING_DIM = K.EMB_DIM  # 10
LAYOUT_VERSION = "miniccg-v1-emb10-372"


@dataclass(frozen=True)
class FeatureLayout:
    """Named segments of the feature vector; offsets are fixed at import
    time and versioned so models can refuse mismatched vectorizers."""

    version: str = LAYOUT_VERSION
    embedding_dim: int = EMBEDDING_DIM
    segments: dict = field(default_factory=lambda: _build_segments())

    @property
    def total_dim(self) -> int:
        return sum(size for _, size in self.segments.values())


def _build_segments() -> dict[str, tuple[int, int]]:
    slot = 7 + EMBEDDING_DIM    # per board slot
    hand = 2 + EMBEDDING_DIM    # per own-hand slot
    segs = {}
    off = 0
    for name, size in [
        ("global", 2),
        ("player_self", 6), ("player_opponent", 6),
        ("board_self", 7 * slot), ("board_opponent", 7 * slot),
        ("hand_self", 10 * hand),
    ]:
        segs[name] = (off, size)
        off += size
    assert off == K.FEATURE_DIM
    return segs


DEFAULT_LAYOUT = FeatureLayout()


class EmbeddingTable:
    """One vector per card id plus the token vocabulary it came from."""

    def __init__(self, vectors: np.ndarray, vocab: dict[str, int]):
        self.vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        self.vocab = vocab

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def to_bytes(self) -> bytes:
        vocab_blob = json.dumps(self.vocab, sort_keys=True).encode()
        head = struct.pack("<4sII I", b"CFEM", self.vectors.shape[0],
                           self.vectors.shape[1], len(vocab_blob))
        return head + vocab_blob + np.ascontiguousarray(self.vectors, dtype="<f4").tobytes()

    @staticmethod
    def from_bytes(blob: bytes) -> "EmbeddingTable":
        magic, n, dim, vlen = struct.unpack_from("<4sII I", blob, 0)
        if magic != b"CFEM":
            raise ValueError("not an embedding table block")
        off = struct.calcsize("<4sII I")
        vocab = json.loads(blob[off:off + vlen].decode())
        off += vlen
        vec = np.frombuffer(blob, dtype="<f4", count=n * dim, offset=off)
        return EmbeddingTable(vec.reshape(n, dim).copy(), vocab)

    @staticmethod
    def zeros(n_cards: int, dim: int = EMBEDDING_DIM) -> "EmbeddingTable":
        return EmbeddingTable(np.zeros((n_cards, dim), dtype=np.float32), {})


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def train_embeddings(cards: list[CardDef] | CardPool, dim: int = EMBEDDING_DIM,
                     context: int = 10, batch: int = 256, epochs: int = 300,
                     negatives: int = 5, lr: float = 0.1, seed: int = 0) -> EmbeddingTable:
    """Skip-gram with negative sampling over the card texts.

    Plain SGD; the learning rate starts at ``lr`` and drops by a factor of
    10 after every 100 epochs.  Negatives are drawn from the unigram^0.75
    distribution.  Deterministic for a fixed seed.  A card's final vector is
    the mean of its token vectors, clamped to [-1, 1]."""
    card_list = cards.cards if isinstance(cards, CardPool) else list(cards)
    sentences = [c.tokens for c in card_list]
    if not any(sentences):
        raise ValueError("empty embedding corpus")

    vocab: dict[str, int] = {}
    for toks in sentences:
        for t in toks:
            if t not in vocab:
                vocab[t] = 0
    vocab = {t: i for i, t in enumerate(sorted(vocab))}
    vsize = len(vocab)

    counts = np.zeros(vsize, dtype=np.float64)
    pairs: list[tuple[int, int]] = []
    for toks in sentences:
        idxs = [vocab[t] for t in toks]
        for i, c in enumerate(idxs):
            counts[c] += 1
            for j in range(max(0, i - context), min(len(idxs), i + context + 1)):
                if j != i:
                    pairs.append((c, idxs[j]))
    pair_arr = np.array(pairs, dtype=np.int64)
    noise = counts ** 0.75
    noise_cdf = np.cumsum(noise / noise.sum())

    rng = np.random.Generator(np.random.PCG64(seed))
    vec_in = rng.uniform(-0.5 / dim, 0.5 / dim, (vsize, dim))
    vec_out = np.zeros((vsize, dim))

    for epoch in range(epochs):
        rate = lr * (0.1 ** (epoch // 100))
        order = rng.permutation(len(pair_arr))
        for lo in range(0, len(pair_arr), batch):
            sel = pair_arr[order[lo:lo + batch]]
            centers, ctx = sel[:, 0], sel[:, 1]
            neg = np.searchsorted(noise_cdf, rng.random((len(sel), negatives)))
            vc = vec_in[centers]                       # (b, d)
            uo = vec_out[ctx]                          # (b, d)
            un = vec_out[neg]                          # (b, k, d)
            g_pos = _sigmoid((vc * uo).sum(1)) - 1.0   # (b,)
            g_neg = _sigmoid((un @ vc[:, :, None])[:, :, 0])  # (b, k)
            grad_c = g_pos[:, None] * uo + (g_neg[:, :, None] * un).sum(1)
            np.add.at(vec_in, centers, -rate * grad_c)
            np.add.at(vec_out, ctx, -rate * g_pos[:, None] * vc)
            np.add.at(vec_out, neg.ravel(),
                      (-rate * g_neg[:, :, None] * vc[:, None, :]).reshape(-1, dim))

    vectors = np.zeros((len(card_list), dim), dtype=np.float32)
    for k, toks in enumerate(sentences):
        if toks:
            vectors[k] = vec_in[[vocab[t] for t in toks]].mean(axis=0)
    np.clip(vectors, -1.0, 1.0, out=vectors)
    return EmbeddingTable(vectors, vocab)


def vectorize(state: GameState, perspective: int,
              layout: FeatureLayout = DEFAULT_LAYOUT,
              emb: EmbeddingTable | None = None) -> np.ndarray:
    """Deterministic feature vector of ``state`` seen from ``perspective``."""
    if emb is None:
        emb = EmbeddingTable.zeros(len(state.pool))
    if emb.dim != layout.embedding_dim:
        raise ValueError(f"embedding dim {emb.dim} != layout dim {layout.embedding_dim}")
    out = np.empty(layout.total_dim, dtype=np.float32)
    K.vectorize_fill(state.array, perspective, state.pool.table, emb.vectors, out)
    return out
