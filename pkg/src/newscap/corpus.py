"""Dataset model, JSONL ingestion, sentence segmentation and tokenization.

A corpus is a JSONL file, one sample per line:

    {"id": str, "article": str, "caption": str, "headline": str?,
     "image_features": str?, "entities": [...]?}

Invalid lines are collected into a per-line error report instead of being
silently dropped.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError

# Characters that become standalone tokens.
PUNCT_TOKENS = set('.,!?;:"()[]')

SENTENCE_ENDERS = set(".!?")

# Words ending in '.' that never terminate a sentence.
ABBREVIATIONS = {"Mr.", "Ms.", "Dr.", "U.S.", "St."}


@dataclass(frozen=True)
class Article:
    id: str
    headline: list[str]
    sentences: list[list[str]]
    raw_text: str


@dataclass(frozen=True)
class CaptionRecord:
    article_id: str
    tokens: list[str]
    raw_text: str


@dataclass(frozen=True)
class SampleBundle:
    article: Article
    caption: CaptionRecord
    image_feature_ref: str
    # Raw external entity annotations from the JSONL line, if any; parsed and
    # validated by the entity annotator, not here.
    entities: list | None = None

    @property
    def id(self) -> str:
        return self.article.id


@dataclass(frozen=True)
class IngestError:
    line_no: int
    message: str


@dataclass
class IngestReport:
    bundles: list[SampleBundle] = field(default_factory=list)
    errors: list[IngestError] = field(default_factory=list)


@dataclass(frozen=True)
class DatasetSplit:
    train: list[str]
    val: list[str]
    test: list[str]
    seed: int

    def ids(self, name: str) -> list[str]:
        if name not in ("train", "val", "test"):
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)


def tokenize(text: str, lowercase: bool = True) -> list[str]:
    """Whitespace tokenization with .,!?;:"()[] split off as single tokens.

    Lowercases by default; pass lowercase=False when capitalization matters
    (entity recognition works on cased tokens).
    """
    if lowercase:
        text = text.lower()
    tokens: list[str] = []
    word: list[str] = []
    for ch in text:
        if ch.isspace():
            if word:
                tokens.append("".join(word))
                word = []
        elif ch in PUNCT_TOKENS:
            if word:
                tokens.append("".join(word))
                word = []
            tokens.append(ch)
        else:
            word.append(ch)
    if word:
        tokens.append("".join(word))
    return tokens


def segment_sentences(text: str) -> list[str]:
    """Split text into sentences at ./!/? followed by whitespace and an
    uppercase letter, or at end of text.

    A terminator glued to a known abbreviation (Mr., Ms., Dr., U.S., St.)
    does not split. Returned segments are stripped of surrounding whitespace.
    """
    segments: list[str] = []
    n = len(text)
    start = 0
    i = 0
    while i < n:
        if text[i] in SENTENCE_ENDERS:
            # The non-whitespace run ending at this character decides the
            # abbreviation exemption.
            j = i
            while j > start and not text[j - 1].isspace():
                j -= 1
            if text[j : i + 1] in ABBREVIATIONS:
                i += 1
                continue
            k = i + 1
            while k < n and text[k].isspace():
                k += 1
            if k == n or (k > i + 1 and text[k].isupper()):
                seg = text[start : i + 1].strip()
                if seg:
                    segments.append(seg)
                start = k
                i = k
                continue
        i += 1
    tail = text[start:].strip()
    if tail:
        segments.append(tail)
    return segments


def _bundle_from_obj(obj: dict) -> SampleBundle:
    for key in ("id", "article", "caption"):
        if key not in obj:
            raise DataError(f"missing required key {key!r}")
    sample_id = obj["id"]
    if not isinstance(sample_id, str) or not sample_id:
        raise DataError("key 'id' must be a nonempty string")
    article_text = obj["article"]
    caption_text = obj["caption"]
    if not isinstance(article_text, str) or not isinstance(caption_text, str):
        raise DataError("keys 'article' and 'caption' must be strings")

    sentences = [tokenize(s) for s in segment_sentences(article_text)]
    sentences = [s for s in sentences if s]
    if not sentences:
        raise DataError("article has no sentences")
    caption_tokens = tokenize(caption_text)
    if not caption_tokens:
        raise DataError("caption has no tokens")

    headline = tokenize(obj.get("headline", "") or "")
    article = Article(
        id=sample_id, headline=headline, sentences=sentences, raw_text=article_text
    )
    caption = CaptionRecord(
        article_id=sample_id, tokens=caption_tokens, raw_text=caption_text
    )
    entities = obj.get("entities")
    if entities is not None and not isinstance(entities, list):
        raise DataError("key 'entities' must be a list")
    return SampleBundle(
        article=article,
        caption=caption,
        image_feature_ref=obj.get("image_features") or sample_id,
        entities=entities,
    )


def ingest_jsonl(path: str | Path) -> IngestReport:
    """Read a JSONL corpus. One bundle per valid line; malformed lines are
    reported with their line numbers in the returned report."""
    report = IngestReport()
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                report.errors.append(IngestError(line_no, f"invalid JSON: {exc}"))
                continue
            if not isinstance(obj, dict):
                report.errors.append(IngestError(line_no, "line is not a JSON object"))
                continue
            try:
                bundle = _bundle_from_obj(obj)
            except DataError as exc:
                report.errors.append(IngestError(line_no, str(exc)))
                continue
            if bundle.id in seen_ids:
                report.errors.append(IngestError(line_no, f"duplicate id {bundle.id!r}"))
                continue
            seen_ids.add(bundle.id)
            report.bundles.append(bundle)
    return report


def emit_jsonl(bundles: list[SampleBundle], path: str | Path) -> None:
    """Write bundles back to JSONL; ingest(emit(bundles)) reproduces them
    token for token."""
    with open(path, "w", encoding="utf-8") as fh:
        for b in bundles:
            obj: dict = {
                "id": b.id,
                "article": b.article.raw_text,
                "caption": b.caption.raw_text,
            }
            if b.article.headline:
                obj["headline"] = " ".join(b.article.headline)
            if b.image_feature_ref != b.id:
                obj["image_features"] = b.image_feature_ref
            if b.entities is not None:
                obj["entities"] = b.entities
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def split_dataset(
    samples: list[SampleBundle],
    ratios: tuple[float, float, float],
    seed: int,
) -> DatasetSplit:
    """Deterministic shuffle split. Val/test sizes are floor-rounded, the
    remainder goes to train."""
    r_train, r_val, r_test = ratios
    if min(ratios) <= 0:
        raise DataError(f"split ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios must sum to 1, got {ratios}")
    if len(samples) < 3:
        raise DataError(f"need at least 3 samples to split, got {len(samples)}")

    ids = [b.id for b in samples]
    rng = random.Random(seed)
    rng.shuffle(ids)
    n = len(ids)
    n_val = int(n * r_val)
    n_test = int(n * r_test)
    n_train = n - n_val - n_test
    return DatasetSplit(
        train=ids[:n_train],
        val=ids[n_train : n_train + n_val],
        test=ids[n_train + n_val :],
        seed=seed,
    )


def split_to_json(split: DatasetSplit) -> dict:
    return {
        "train": split.train,
        "val": split.val,
        "test": split.test,
        "seed": split.seed,
    }


def split_from_json(obj: dict) -> DatasetSplit:
    return DatasetSplit(
        train=list(obj["train"]),
        val=list(obj["val"]),
        test=list(obj["test"]),
        seed=int(obj["seed"]),
    )
