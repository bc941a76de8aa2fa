"""Node feature construction in one shared space.

Text is embedded with signed feature hashing of character 3-5 grams (an
offline, deterministic stand-in for a sentence encoder); imported vectors
override it for exactly matching texts.  Every node row is
``[text embedding | node-kind one-hot (4) | log(1+freq), mention kind (3), cues (7)]``.
"""

from __future__ import annotations

import hashlib
import math
from functools import lru_cache
from pathlib import Path

import numpy as np

from .extract import CUE_CATEGORIES, MENTION_KINDS
from .graph import NODE_KINDS, ENTITY, QUERY

N_AUX = 1 + len(MENTION_KINDS) + len(CUE_CATEGORIES)


def feature_dim(d_text: int) -> int:
    return d_text + len(NODE_KINDS) + N_AUX


@lru_cache(maxsize=65536)
def _hashed(text: str, d_text: int, seed: int) -> tuple:
    vec = np.zeros(d_text)
    folded = f" {text.casefold()} "
    key = seed.to_bytes(8, "little", signed=True)
    for n in (3, 4, 5):
        for i in range(len(folded) - n + 1):
            digest = hashlib.blake2b(folded[i:i + n].encode("utf-8"), digest_size=8, key=key).digest()
            h = int.from_bytes(digest, "little")
            vec[(h >> 1) % d_text] += 1.0 if h & 1 else -1.0
    return tuple(vec)


def embed_text(text: str, d_text: int = 256, seed: int = 0) -> np.ndarray:
    if d_text < 8:
        raise ValueError("d_text must be at least 8")
    if not text.strip():
        return np.zeros(d_text)
    vec = np.array(_hashed(text, d_text, seed))
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def import_embeddings(path, d_text: int | None = None) -> dict[str, np.ndarray]:
    """Read ``text<TAB>v1,v2,...`` rows; vectors are L2-normalized on load."""
    out: dict[str, np.ndarray] = {}
    dim = d_text
    with Path(path).open(encoding="utf-8") as fh:
        for row, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            text, sep, values = line.rpartition("\t")
            if not sep:
                raise ValueError(f"row {row}: expected text<TAB>vector")
            try:
                vec = np.array([float(v) for v in values.split(",")])
            except ValueError:
                raise ValueError(f"row {row}: non-numeric vector entry") from None
            if dim is None:
                dim = len(vec)
            if len(vec) != dim:
                raise ValueError(f"row {row}: dim {len(vec)} ≠ {dim}")
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"row {row}: non-finite vector entry")
            norm = np.linalg.norm(vec)
            out[text] = vec / norm if norm > 0 else vec
    return out


class TextEmbedder:
    """Hashing embedder with an optional table of imported vectors."""

    def __init__(self, d_text: int = 256, seed: int = 0, imported=None):
        self.d_text = d_text
        self.seed = seed
        self.imported = dict(imported or {})
        for text, vec in self.imported.items():
            if len(vec) != d_text:
                raise ValueError(f"imported vector for {text!r}: dim {len(vec)} ≠ {d_text}")

    def __call__(self, text: str) -> np.ndarray:
        vec = self.imported.get(text)
        if vec is not None:
            return np.asarray(vec, dtype=float)
        return embed_text(text, self.d_text, self.seed)


def featurize(graph, embedder: TextEmbedder) -> np.ndarray:
    """Feature matrix with one row per node, rows indexed by node id."""
    d = embedder.d_text
    X = np.zeros((len(graph.nodes), feature_dim(d)))
    kind_off = d
    aux_off = d + len(NODE_KINDS)
    for node in graph.nodes:
        row = X[node.id]
        row[:d] = embedder(node.text)
        row[kind_off + NODE_KINDS.index(node.kind)] = 1.0
        if node.kind == ENTITY:
            row[aux_off] = math.log1p(node.features.get("frequency", 1))
            mk = node.features.get("mention_kind")
            if mk in MENTION_KINDS:
                row[aux_off + 1 + MENTION_KINDS.index(mk)] = 1.0
        elif node.kind == QUERY:
            for cue in node.features.get("cues", ()):
                row[aux_off + 1 + len(MENTION_KINDS) + CUE_CATEGORIES.index(cue)] = 1.0
    return X
