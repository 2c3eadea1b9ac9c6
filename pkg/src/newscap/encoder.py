"""Sentence-level article encodings.

An article becomes a fixed matrix of max_sentences x dim rows: one row per
sentence, zero rows as padding, and (for long articles) the last row holding
the mean encoding of the overflow sentences. Rows are plain averages of word
vectors (AVG), smoothed-inverse-frequency weighted averages (WAVG), or WAVG
with the corpus-level first principal component projected out (TBB).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .corpus import Article
from .embeddings import EmbeddingTable, FrequencyTable
from .errors import DataError


class EncoderMethod(Enum):
    AVG = "avg"
    WAVG = "wavg"
    TBB = "tbb"


DEFAULT_SIF_A = 1e-3
DEFAULT_MAX_SENTENCES = 55


@dataclass(frozen=True)
class EncoderConfig:
    method: EncoderMethod = EncoderMethod.AVG
    sif_a: float = DEFAULT_SIF_A
    max_sentences: int = DEFAULT_MAX_SENTENCES
    include_headline: bool = False

    def __post_init__(self):
        if self.sif_a <= 0:
            raise DataError(f"sif_a must be positive, got {self.sif_a}")
        if self.max_sentences < 1:
            raise DataError("max_sentences must be >= 1")


@dataclass(frozen=True)
class PrincipalComponent:
    u: np.ndarray  # unit vector
    fitted_on: str = ""


@dataclass(frozen=True)
class ArticleEncoding:
    matrix: np.ndarray  # (max_sentences, dim), float64
    n_real_sentences: int


def encode_sentence(
    tokens: list[str],
    method: EncoderMethod,
    table: EmbeddingTable,
    freq: FrequencyTable | None = None,
    sif_a: float = DEFAULT_SIF_A,
) -> np.ndarray:
    """Average (AVG) or SIF-weighted average (WAVG) of the word vectors.

    Tokens missing from the embedding table contribute a zero vector but
    still count toward the denominator. An empty sentence encodes to zeros.
    """
    if method is EncoderMethod.TBB:
        raise ValueError("TBB is applied per article; encode rows with WAVG")
    out = np.zeros(table.dim, dtype=np.float64)
    if not tokens:
        return out
    if method is EncoderMethod.WAVG and freq is None:
        raise ValueError("WAVG needs a frequency table")
    for tok in tokens:
        vec = table.get(tok)
        if vec is None:
            continue
        if method is EncoderMethod.AVG:
            out += vec
        else:
            out += freq.sif_weight(tok, sif_a) * vec
    out /= len(tokens)
    return out


def fit_principal_component(
    rows: np.ndarray, fitted_on: str = ""
) -> PrincipalComponent:
    """First right singular vector of the row matrix by power iteration on
    the Gram matrix.

    Stops when successive unit iterates differ by less than 1e-10 in l2 or
    after 1000 iterations; the sign is fixed by making the largest-magnitude
    entry positive.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError("expected a 2-d row matrix")
    if not np.any(rows):
        raise DataError("degenerate corpus: all encoding rows are zero")

    gram = rows.T @ rows
    norms = np.linalg.norm(rows, axis=1)
    u = rows[int(np.argmax(norms))].copy()
    u /= np.linalg.norm(u)
    for _ in range(1000):
        w = gram @ u
        norm = np.linalg.norm(w)
        if norm == 0.0:
            break
        w /= norm
        if np.linalg.norm(w - u) < 1e-10:
            u = w
            break
        u = w
    if u[int(np.argmax(np.abs(u)))] < 0:
        u = -u
    return PrincipalComponent(u=u, fitted_on=fitted_on)


def remove_component(v: np.ndarray, pc: PrincipalComponent) -> np.ndarray:
    """Project v onto the complement of the principal direction."""
    if v.shape != pc.u.shape:
        raise ValueError(f"dimension mismatch: {v.shape} vs {pc.u.shape}")
    return v - (pc.u @ v) * pc.u


def encode_article(
    article: Article,
    config: EncoderConfig,
    table: EmbeddingTable,
    freq: FrequencyTable | None = None,
    pc: PrincipalComponent | None = None,
) -> ArticleEncoding:
    """Encode an article into the fixed sentence-feature matrix.

    With S sentences and M = max_sentences: rows 0..min(S, M)-1 hold the
    per-sentence encodings; when S > M the last row instead holds the mean
    encoding of sentences M-1..S-1; remaining rows are zero. TBB removes the
    fitted principal component from every nonzero row after that aggregation.
    """
    method = config.method
    row_method = EncoderMethod.WAVG if method is EncoderMethod.TBB else method
    if method is EncoderMethod.TBB and pc is None:
        raise ValueError("TBB encoding needs a fitted principal component")

    sentences = list(article.sentences)
    if config.include_headline and article.headline:
        sentences = [article.headline] + sentences
    m = config.max_sentences
    out = np.zeros((m, table.dim), dtype=np.float64)
    n_real = len(sentences)

    encoded = [
        encode_sentence(s, row_method, table, freq, config.sif_a) for s in sentences
    ]
    if n_real <= m:
        for j, row in enumerate(encoded):
            out[j] = row
    else:
        for j in range(m - 1):
            out[j] = encoded[j]
        out[m - 1] = np.mean(encoded[m - 1 :], axis=0)

    if method is EncoderMethod.TBB:
        for j in range(min(n_real, m)):
            if np.any(out[j]):
                out[j] = remove_component(out[j], pc)
    return ArticleEncoding(matrix=out, n_real_sentences=n_real)


def pc_to_json(pc: PrincipalComponent) -> dict:
    return {
        "dim": int(pc.u.shape[0]),
        "values": [float(x) for x in pc.u],
        "fitted_on": pc.fitted_on,
    }


def pc_from_json(obj: dict) -> PrincipalComponent:
    values = np.array(obj["values"], dtype=np.float64)
    if values.shape[0] != int(obj["dim"]):
        raise DataError("principal component dim does not match values")
    return PrincipalComponent(u=values, fitted_on=obj.get("fitted_on", ""))


ENCODING_MAGIC = b"AENC"
ENCODING_VERSION = 1


def save_encoding(enc: ArticleEncoding, path: str | Path) -> None:
    """Binary cache: magic, version u32, M u32, D u32, then M*D little-endian
    float64 values row-major, followed by the real sentence count u32."""
    m, d = enc.matrix.shape
    with open(path, "wb") as fh:
        fh.write(ENCODING_MAGIC)
        fh.write(struct.pack("<III", ENCODING_VERSION, m, d))
        fh.write(np.ascontiguousarray(enc.matrix, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", enc.n_real_sentences))


def load_encoding(path: str | Path) -> ArticleEncoding:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != ENCODING_MAGIC:
            raise DataError(f"{path}: not an article encoding file")
        version, m, d = struct.unpack("<III", fh.read(12))
        if version != ENCODING_VERSION:
            raise DataError(f"{path}: unsupported encoding version {version}")
        data = fh.read(m * d * 8)
        if len(data) != m * d * 8:
            raise DataError(f"{path}: truncated encoding data")
        matrix = np.frombuffer(data, dtype="<f8").reshape(m, d).astype(np.float64)
        (n_real,) = struct.unpack("<I", fh.read(4))
    return ArticleEncoding(matrix=matrix, n_real_sentences=n_real)
