"""Named-entity recognition and template captions.

Entities come from either a gazetteer plus capitalization/date heuristics or
from externally supplied annotations embedded in the corpus JSONL. Captions
are converted to templates by replacing entity spans with typed placeholder
tokens (PERSON_, ORGANIZATION_, ...); article entities are indexed per tag in
order of appearance for the insertion stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .corpus import Article, CaptionRecord, segment_sentences, tokenize
from .errors import DataError


class EntityTag(Enum):
    PERSON = "PERSON"
    ORG = "ORG"
    GPE = "GPE"
    LOC = "LOC"
    DATE = "DATE"
    NORP = "NORP"
    EVENT = "EVENT"
    FAC = "FAC"
    MISC = "MISC"


# One vocabulary token per tag; ordinals are metadata, not vocabulary.
PLACEHOLDER_TOKENS: dict[EntityTag, str] = {
    tag: ("ORGANIZATION_" if tag is EntityTag.ORG else tag.value + "_")
    for tag in EntityTag
}
TOKEN_TO_TAG: dict[str, EntityTag] = {v: k for k, v in PLACEHOLDER_TOKENS.items()}

MONTHS = {
    "january", "february", "march", "april", "may", "june",
    "july", "august", "september", "october", "november", "december",
}

# Lowercased function words that a sentence-initial capital does not make
# an entity.
STOPWORDS = {
    "the", "a", "an", "in", "on", "at", "of", "for", "to", "and", "but",
    "or", "nor", "he", "she", "it", "they", "we", "you", "i", "his", "her",
    "its", "their", "our", "your", "my", "this", "that", "these", "those",
    "there", "here", "when", "where", "while", "after", "before", "during",
    "with", "without", "from", "by", "as", "is", "are", "was", "were", "be",
    "been", "being", "have", "has", "had", "do", "does", "did", "not", "no",
    "so", "if", "then", "than", "into", "through", "over", "under", "again",
    "once", "all", "any", "both", "each", "few", "more", "most", "other",
    "some", "such", "only", "own", "same", "too", "very", "can", "could",
    "will", "would", "shall", "should", "may", "might", "must", "just",
    "now", "what", "who", "whom", "which", "how", "why",
}


@dataclass(frozen=True)
class NamedEntity:
    surface: tuple[str, ...]  # original-case tokens
    tag: EntityTag
    sentence_index: int
    token_offset: int

    def __post_init__(self):
        if not self.surface:
            raise DataError("entity surface must be nonempty")
        if self.sentence_index < 0 or self.token_offset < 0:
            raise DataError("entity position must be nonnegative")

    @property
    def surface_text(self) -> str:
        return " ".join(self.surface)

    @property
    def position(self) -> tuple[int, int]:
        return (self.sentence_index, self.token_offset)


@dataclass(frozen=True)
class Placeholder:
    tag: EntityTag
    ordinal: int  # 1-based, counted per tag left to right

    @property
    def token(self) -> str:
        return PLACEHOLDER_TOKENS[self.tag]


@dataclass
class TemplateCaption:
    """Caption tokens where entity spans are replaced by Placeholder objects.

    `sources` aligns with the placeholders in order and holds the entity each
    one replaced (empty for templates parsed back from generated token
    sequences).
    """

    tokens: list[str | Placeholder]
    sources: list[NamedEntity] = field(default_factory=list)

    @property
    def placeholders(self) -> list[Placeholder]:
        return [t for t in self.tokens if isinstance(t, Placeholder)]

    def model_tokens(self) -> list[str]:
        """Tokens as seen by the captioning model: one token per tag."""
        return [t.token if isinstance(t, Placeholder) else t for t in self.tokens]

    def substitute(self, surfaces: list[tuple[str, ...]]) -> list[str]:
        """Replace placeholders left to right with the given surfaces,
        case-normalized."""
        if len(surfaces) != len(self.placeholders):
            raise ValueError(
                f"need {len(self.placeholders)} surfaces, got {len(surfaces)}"
            )
        out: list[str] = []
        k = 0
        for t in self.tokens:
            if isinstance(t, Placeholder):
                out.extend(w.lower() for w in surfaces[k])
                k += 1
            else:
                out.append(t)
        return out


class Gazetteer:
    """Surface string -> tag lookup with longest-match semantics."""

    def __init__(self, entries: dict[str, EntityTag] | None = None):
        # first cased token -> [(cased token tuple, tag)], longest first
        self._by_head: dict[str, list[tuple[tuple[str, ...], EntityTag]]] = {}
        self.size = 0
        for surface, tag in (entries or {}).items():
            self.add(surface, tag)

    def add(self, surface: str, tag: EntityTag) -> None:
        toks = tuple(tokenize(surface, lowercase=False))
        if not toks:
            raise DataError(f"gazetteer surface {surface!r} has no tokens")
        bucket = self._by_head.setdefault(toks[0], [])
        bucket.append((toks, tag))
        bucket.sort(key=lambda e: -len(e[0]))
        self.size += 1

    def match_at(self, tokens: list[str], pos: int) -> tuple[tuple[str, ...], EntityTag] | None:
        """Longest gazetteer entry matching tokens[pos:], or None."""
        for toks, tag in self._by_head.get(tokens[pos], ()):
            if tuple(tokens[pos : pos + len(toks)]) == toks:
                return toks, tag
        return None


def load_gazetteer(path: str | Path) -> Gazetteer:
    """Read a UTF-8 TSV gazetteer, one `surface<TAB>TAG` entry per line."""
    gaz = Gazetteer()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{line_no}: expected surface<TAB>TAG")
            surface, tag_name = parts
            try:
                tag = EntityTag(tag_name.strip())
            except ValueError:
                raise DataError(f"{path}:{line_no}: unknown tag {tag_name!r}") from None
            gaz.add(surface, tag)
    return gaz


def _is_year_token(tok: str) -> bool:
    return len(tok) == 4 and tok.isdigit() and 1000 <= int(tok) <= 2100


def _is_capitalized_word(tok: str) -> bool:
    if len(tok) < 2 or not tok[0].isupper():
        return False
    return all(c.isalpha() or c in "-'" for c in tok)


def annotate(raw_text: str, gazetteer: Gazetteer | None = None) -> list[NamedEntity]:
    """Deterministic entity recognition on cased text.

    Longest gazetteer matches are taken first; leftover 4-digit years and
    month names become DATE; remaining runs of 1-3 capitalized tokens become
    PERSON, except stopwords capitalized only because they start a sentence.
    """
    gazetteer = gazetteer or Gazetteer()
    entities: list[NamedEntity] = []
    for s_idx, sentence in enumerate(segment_sentences(raw_text)):
        tokens = tokenize(sentence, lowercase=False)
        taken = [False] * len(tokens)

        pos = 0
        while pos < len(tokens):
            hit = gazetteer.match_at(tokens, pos)
            if hit is not None:
                toks, tag = hit
                entities.append(NamedEntity(toks, tag, s_idx, pos))
                for k in range(pos, pos + len(toks)):
                    taken[k] = True
                pos += len(toks)
            else:
                pos += 1

        for pos, tok in enumerate(tokens):
            if taken[pos]:
                continue
            if _is_year_token(tok) or (tok[0].isupper() and tok.lower() in MONTHS):
                entities.append(NamedEntity((tok,), EntityTag.DATE, s_idx, pos))
                taken[pos] = True

        run_start = None
        for pos in range(len(tokens) + 1):
            inside = (
                pos < len(tokens)
                and not taken[pos]
                and _is_capitalized_word(tokens[pos])
            )
            if inside and run_start is None:
                run_start = pos
            elif not inside and run_start is not None:
                start, end = run_start, pos
                if start == 0 and tokens[0].lower() in STOPWORDS:
                    start += 1
                if 1 <= end - start <= 3:
                    entities.append(
                        NamedEntity(tuple(tokens[start:end]), EntityTag.PERSON, s_idx, start)
                    )
                run_start = None

    entities.sort(key=lambda e: e.position)
    return entities


@dataclass
class ExternalAnnotations:
    caption: list[NamedEntity] = field(default_factory=list)
    article: list[NamedEntity] = field(default_factory=list)


def _cased_sentences(raw_text: str) -> list[list[str]]:
    return [tokenize(s, lowercase=False) for s in segment_sentences(raw_text)]


def load_external_annotations(bundle) -> ExternalAnnotations:
    """Parse and validate the `entities` array of a corpus sample.

    Each entry is {"surface", "tag", "sentence_index", "token_offset"} plus an
    optional "source" of "caption" (default) or "article". Positions address
    the tokenized sentences of the referenced text; the tokens there must
    equal the surface up to case.
    """
    out = ExternalAnnotations()
    if not bundle.entities:
        return out
    texts = {
        "caption": _cased_sentences(bundle.caption.raw_text),
        "article": _cased_sentences(bundle.article.raw_text),
    }
    for i, obj in enumerate(bundle.entities):
        if not isinstance(obj, dict):
            raise DataError(f"entity #{i}: expected an object")
        try:
            surface_text = obj["surface"]
            tag_name = obj["tag"]
            s_idx = int(obj["sentence_index"])
            t_off = int(obj["token_offset"])
        except KeyError as exc:
            raise DataError(f"entity #{i}: missing key {exc.args[0]!r}") from None
        try:
            tag = EntityTag(tag_name)
        except ValueError:
            raise DataError(f"entity #{i}: unknown tag {tag_name!r}") from None
        source = obj.get("source", "caption")
        if source not in texts:
            raise DataError(f"entity #{i}: unknown source {source!r}")
        surface = tuple(tokenize(str(surface_text), lowercase=False))
        sentences = texts[source]
        if not (0 <= s_idx < len(sentences)):
            raise DataError(
                f"entity #{i}: sentence_index {s_idx} out of range for {source}"
            )
        span = sentences[s_idx][t_off : t_off + len(surface)]
        if t_off >= len(sentences[s_idx]) or len(span) < len(surface):
            raise DataError(
                f"entity #{i}: token_offset {t_off} out of range in "
                f"{source} sentence {s_idx}"
            )
        if [w.lower() for w in span] != [w.lower() for w in surface]:
            raise DataError(
                f"entity #{i}: surface {surface_text!r} does not match "
                f"{source} sentence {s_idx} at offset {t_off}"
            )
        entity = NamedEntity(surface, tag, s_idx, t_off)
        getattr(out, source).append(entity)
    out.caption.sort(key=lambda e: e.position)
    out.article.sort(key=lambda e: e.position)
    return out


def _resolve_overlaps(spans: list[tuple[int, int, NamedEntity]]) -> list[tuple[int, int, NamedEntity]]:
    """Keep the longer span on overlap, then the earlier one."""
    chosen: list[tuple[int, int, NamedEntity]] = []
    for start, length, ent in sorted(spans, key=lambda s: (-s[1], s[0])):
        if all(start + length <= s or start >= s + l for s, l, _ in chosen):
            chosen.append((start, length, ent))
    chosen.sort(key=lambda s: s[0])
    return chosen


def templatize_caption(
    caption: CaptionRecord, entities: list[NamedEntity]
) -> TemplateCaption:
    """Replace entity spans in the tokenized caption with typed placeholders.

    Entity positions are per caption sentence; they are flattened against the
    caption's own segmentation. Ordinals count placeholders of the same tag
    left to right from 1.
    """
    sent_lens = [len(tokenize(s)) for s in segment_sentences(caption.raw_text)]
    offsets = [0]
    for n in sent_lens:
        offsets.append(offsets[-1] + n)

    spans: list[tuple[int, int, NamedEntity]] = []
    for ent in entities:
        if ent.sentence_index >= len(sent_lens):
            raise DataError(
                f"entity sentence_index {ent.sentence_index} outside caption"
            )
        flat = offsets[ent.sentence_index] + ent.token_offset
        if flat + len(ent.surface) > len(caption.tokens):
            raise DataError(
                f"entity at {ent.position} spans past the end of the caption"
            )
        spans.append((flat, len(ent.surface), ent))

    tokens: list[str | Placeholder] = []
    sources: list[NamedEntity] = []
    per_tag_count: dict[EntityTag, int] = {}
    pos = 0
    span_iter = iter(_resolve_overlaps(spans))
    nxt = next(span_iter, None)
    while pos < len(caption.tokens):
        if nxt is not None and pos == nxt[0]:
            start, length, ent = nxt
            ordinal = per_tag_count.get(ent.tag, 0) + 1
            per_tag_count[ent.tag] = ordinal
            tokens.append(Placeholder(ent.tag, ordinal))
            sources.append(ent)
            pos += length
            nxt = next(span_iter, None)
        else:
            tokens.append(caption.tokens[pos])
            pos += 1
    return TemplateCaption(tokens=tokens, sources=sources)


def template_from_model_tokens(tokens: list[str]) -> TemplateCaption:
    """Parse a generated token sequence back into a template; placeholder
    tokens get per-tag ordinals, everything else stays a word."""
    out: list[str | Placeholder] = []
    per_tag_count: dict[EntityTag, int] = {}
    for tok in tokens:
        tag = TOKEN_TO_TAG.get(tok)
        if tag is None:
            out.append(tok)
        else:
            ordinal = per_tag_count.get(tag, 0) + 1
            per_tag_count[tag] = ordinal
            out.append(Placeholder(tag, ordinal))
    return TemplateCaption(tokens=out)


class EntityIndex:
    """Article entities grouped by tag, in order of appearance."""

    def __init__(self, entities_by_tag: dict[EntityTag, list[NamedEntity]]):
        self._by_tag = entities_by_tag

    def get(self, tag: EntityTag) -> list[NamedEntity]:
        return self._by_tag.get(tag, [])

    def tags(self) -> list[EntityTag]:
        return [t for t in EntityTag if t in self._by_tag]

    def in_sentence(self, tag: EntityTag, sentence_index: int) -> list[NamedEntity]:
        return [e for e in self.get(tag) if e.sentence_index == sentence_index]

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_tag.values())


def build_entity_index(article: Article, entities: list[NamedEntity]) -> EntityIndex:
    by_tag: dict[EntityTag, list[NamedEntity]] = {}
    seen: set[tuple[EntityTag, int, int]] = set()
    for ent in sorted(entities, key=lambda e: e.position):
        if ent.sentence_index >= len(article.sentences):
            raise DataError(
                f"entity sentence_index {ent.sentence_index} outside article "
                f"{article.id!r}"
            )
        key = (ent.tag, ent.sentence_index, ent.token_offset)
        if key in seen:
            continue
        seen.add(key)
        by_tag.setdefault(ent.tag, []).append(ent)
    return EntityIndex(by_tag)


def entity_to_json(ent: NamedEntity) -> dict:
    return {
        "surface": ent.surface_text,
        "tag": ent.tag.value,
        "sentence_index": ent.sentence_index,
        "token_offset": ent.token_offset,
    }


def entity_from_json(obj: dict) -> NamedEntity:
    return NamedEntity(
        surface=tuple(str(obj["surface"]).split()),
        tag=EntityTag(obj["tag"]),
        sentence_index=int(obj["sentence_index"]),
        token_offset=int(obj["token_offset"]),
    )
