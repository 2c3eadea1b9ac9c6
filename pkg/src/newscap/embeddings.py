"""Word vectors, model vocabulary, and corpus unigram frequencies.

Word vectors use the plain text format, one `token v1 ... vD` per line. The
vocabulary reserves <pad>=0, <start>=1, <end>=2, <unk>=3 and always contains
the placeholder tokens; the frequency table backs the smoothed
inverse-frequency sentence weighting.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from pathlib import Path

import numpy as np

from .entities import PLACEHOLDER_TOKENS, EntityTag
from .errors import DataError

log = logging.getLogger(__name__)

PAD, START, END, UNK = "<pad>", "<start>", "<end>", "<unk>"
RESERVED = (PAD, START, END, UNK)
PAD_ID, START_ID, END_ID, UNK_ID = 0, 1, 2, 3

TOTAL_KEY = "__total__"


class EmbeddingTable:
    """token -> float64 vector of fixed dimension; misses are explicit."""

    def __init__(self, dim: int, vectors: dict[str, np.ndarray]):
        self.dim = dim
        self._vectors = vectors

    def get(self, token: str) -> np.ndarray | None:
        return self._vectors.get(token)

    def __contains__(self, token: str) -> bool:
        return token in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def tokens(self):
        return self._vectors.keys()


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Parse a word-vector text file; the dimension is inferred from the
    first line. Inconsistent dimensions raise with the offending line number;
    duplicate tokens keep the first occurrence with a warning."""
    dim: int | None = None
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if dim is None:
                if not values:
                    raise DataError(f"{path}:{line_no}: no vector values")
                dim = len(values)
            if len(values) != dim:
                raise DataError(
                    f"{path}:{line_no}: expected {dim} values, got {len(values)}"
                )
            if token in vectors:
                log.warning("%s:%d: duplicate token %r, keeping first", path, line_no, token)
                continue
            try:
                vectors[token] = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError:
                raise DataError(f"{path}:{line_no}: non-numeric vector value") from None
    if dim is None:
        raise DataError(f"{path}: empty embedding file, cannot infer dimension")
    return EmbeddingTable(dim, vectors)


def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for token in table.tokens():
            vec = table.get(token)
            fh.write(token + " " + " ".join(repr(float(v)) for v in vec) + "\n")


class Vocabulary:
    """Bijective token <-> id map with fixed reserved ids."""

    def __init__(self, id_to_token: list[str]):
        if list(id_to_token[:4]) != list(RESERVED):
            raise DataError(f"vocabulary must start with {RESERVED}")
        self._id_to_token = list(id_to_token)
        self._token_to_id = {t: i for i, t in enumerate(id_to_token)}
        if len(self._token_to_id) != len(self._id_to_token):
            raise DataError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def id_of(self, token: str) -> int:
        return self._token_to_id.get(token, UNK_ID)

    def token_of(self, idx: int) -> str:
        return self._id_to_token[idx]

    def encode(self, tokens: list[str], add_sentinels: bool = False) -> np.ndarray:
        ids = [self._token_to_id.get(t, UNK_ID) for t in tokens]
        if add_sentinels:
            ids = [START_ID] + ids + [END_ID]
        return np.array(ids, dtype=np.int64)

    def decode(self, ids) -> list[str]:
        return [self._id_to_token[int(i)] for i in ids]

    def to_json(self) -> dict:
        return {t: i for i, t in enumerate(self._id_to_token)}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        items = sorted(obj.items(), key=lambda kv: kv[1])
        if [i for _, i in items] != list(range(len(items))):
            raise DataError("vocabulary ids must be 0..n-1 without gaps")
        return cls([t for t, _ in items])

    def content_hash(self) -> str:
        payload = json.dumps(self.to_json(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


def build_vocabulary(
    caption_token_lists: list[list[str]],
    min_count: int = 4,
    max_len: int = 31,
) -> Vocabulary:
    """Count caption tokens (after truncation to max_len) and keep those seen
    at least min_count times. Placeholder tokens are always kept."""
    if min_count < 1:
        raise DataError(f"min_count must be >= 1, got {min_count}")
    counts: Counter[str] = Counter()
    for tokens in caption_token_lists:
        counts.update(tokens[:max_len])

    placeholders = [PLACEHOLDER_TOKENS[t] for t in EntityTag]
    vocab = list(RESERVED) + placeholders
    fixed = set(vocab)
    kept = [
        t for t, c in counts.items() if c >= min_count and t not in fixed
    ]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(vocab + kept)


class FrequencyTable:
    """Unigram counts with tf(w) = count(w) / total; unseen tokens have
    tf 0."""

    def __init__(self, counts: dict[str, int], total: int | None = None):
        self.counts = dict(counts)
        self.total = sum(self.counts.values()) if total is None else total
        if self.total != sum(self.counts.values()):
            raise DataError("frequency table total does not match counts")

    def count(self, token: str) -> int:
        return self.counts.get(token, 0)

    def tf(self, token: str) -> float:
        if self.total == 0:
            return 0.0
        return self.counts.get(token, 0) / self.total

    def sif_weight(self, token: str, a: float) -> float:
        return a / (a + self.tf(token))

    def to_json(self) -> dict:
        obj = {t: c for t, c in sorted(self.counts.items())}
        obj[TOTAL_KEY] = self.total
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "FrequencyTable":
        total = int(obj.get(TOTAL_KEY, 0))
        counts = {t: int(c) for t, c in obj.items() if t != TOTAL_KEY}
        return cls(counts, total)


def build_frequency_table(token_lists) -> FrequencyTable:
    """Count tokens over an iterable of token lists (article sentences of
    the training split, typically)."""
    counts: Counter[str] = Counter()
    for tokens in token_lists:
        counts.update(tokens)
    return FrequencyTable(dict(counts))
