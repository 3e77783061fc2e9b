"""Model bundles: two position-specific value networks + embeddings + layout.

Container format (little-endian): magic ``CFMB``, format version u32, then
four length-prefixed blocks (u64 length + bytes): layout-version string,
embedding table, first-player network, second-player network.  Every block
is byte-exact, so identical training runs produce identical bundle files.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .engine import GameState
from .features import DEFAULT_LAYOUT, EmbeddingTable, FeatureLayout, vectorize
from .neural import ModelFormatError, ValueNetwork, model_bytes, model_from_bytes

BUNDLE_MAGIC = b"CFMB"
BUNDLE_VERSION = 1


@dataclass
class ModelBundle:
    """Everything an agent needs to evaluate states: one network per player
    position, the card embeddings, and the layout version they assume."""

    nets: tuple[ValueNetwork, ValueNetwork]
    embeddings: EmbeddingTable
    layout_version: str = DEFAULT_LAYOUT.version

    def to_bytes(self) -> bytes:
        blocks = [
            self.layout_version.encode(),
            self.embeddings.to_bytes(),
            model_bytes(self.nets[0]),
            model_bytes(self.nets[1]),
        ]
        out = [BUNDLE_MAGIC, struct.pack("<I", BUNDLE_VERSION)]
        for b in blocks:
            out.append(struct.pack("<Q", len(b)))
            out.append(b)
        return b"".join(out)

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @staticmethod
    def from_bytes(blob: bytes, layout: FeatureLayout = DEFAULT_LAYOUT) -> "ModelBundle":
        if blob[:4] != BUNDLE_MAGIC:
            raise ModelFormatError("not a model bundle (bad magic)")
        version = struct.unpack_from("<I", blob, 4)[0]
        if version != BUNDLE_VERSION:
            raise ModelFormatError(f"unsupported bundle version {version}")
        off = 8
        blocks = []
        for _ in range(4):
            if off + 8 > len(blob):
                raise ModelFormatError("truncated bundle")
            (n,) = struct.unpack_from("<Q", blob, off)
            off += 8
            if off + n > len(blob):
                raise ModelFormatError("truncated bundle block")
            blocks.append(blob[off:off + n])
            off += n
        layout_version = blocks[0].decode()
        if layout_version != layout.version:
            raise ModelFormatError(
                f"bundle layout {layout_version!r} does not match vectorizer {layout.version!r}")
        emb = EmbeddingTable.from_bytes(blocks[1])
        net0 = model_from_bytes(blocks[2], expect_input_dim=layout.total_dim)
        net1 = model_from_bytes(blocks[3], expect_input_dim=layout.total_dim)
        return ModelBundle((net0, net1), emb, layout_version)

    @staticmethod
    def load(path: str, layout: FeatureLayout = DEFAULT_LAYOUT) -> "ModelBundle":
        with open(path, "rb") as fh:
            return ModelBundle.from_bytes(fh.read(), layout)


class BundleEvaluator:
    """StateEvaluator over a bundle: vectorize from the active player's
    perspective, run that position's network, reorder to (p0, p1)."""

    def __init__(self, bundle: ModelBundle, layout: FeatureLayout = DEFAULT_LAYOUT):
        self.bundle = bundle
        self.layout = layout

    def score_vector(self, state: GameState) -> tuple[float, float]:
        p = state.active
        x = vectorize(state, p, self.layout, self.bundle.embeddings)
        probs = self.bundle.nets[p].forward(x)
        mine, theirs = float(probs[0]), float(probs[1])
        return (mine, theirs) if p == 0 else (theirs, mine)
