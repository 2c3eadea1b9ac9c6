"""Deterministic synthetic corpora for tests, demos, and the bundled data.

Every sample is a short entity-bearing caption plus a small article in which
exactly one sentence contains the caption's entities (with the caption's
content words around them) while the other sentences carry same-tag
distractor entities. Entity annotations are embedded in the JSONL so the
pipeline does not depend on the heuristic recognizer for ground truth.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

DIM = 24
OVERFIT_SEED = 11
MINI_SEED = 23
EMBEDDING_SEED = 5

FIRST_NAMES = [
    "Maria", "Omar", "Ingrid", "Tomas", "Aisha", "Viktor",
    "Lena", "Rafael", "Noor", "Stefan", "Carmen", "Dmitri",
]
LAST_NAMES = [
    "Duke", "Reyes", "Salo", "Vance", "Okafor", "Lind",
    "Moreau", "Stern", "Haddad", "Quint", "Ibarra", "Falk",
]
ORGS = [
    ("Crescent", "Hall"), ("Halcyon", "Museum"), ("Borealis", "Theater"),
    ("Meridian", "Gallery"), ("Summit", "Forum"), ("Harbor", "Institute"),
    ("Aurora", "Pavilion"), ("Juniper", "Library"),
]
GPES = [
    "Lisbon", "Oslo", "Nairobi", "Quito", "Hanoi",
    "Tallinn", "Porto", "Geneva", "Valletta", "Bogota",
]
YEARS = ["1962", "1987", "1994", "2003", "2011", "2018"]
MONTH_NAMES = ["January", "March", "July", "October"]

# Caption patterns; "w" items are literal words, "e" items are entity slots.
CAPTION_PATTERNS = [
    [("e", "P1"), ("w", "performing"), ("w", "at"), ("e", "ORG1"), ("w", ".")],
    [("e", "P1"), ("w", "speaking"), ("w", "at"), ("e", "ORG1"), ("w", "in"), ("e", "GPE1"), ("w", ".")],
    [("e", "P1"), ("w", "arriving"), ("w", "in"), ("e", "GPE1"), ("w", "in"), ("e", "DATE1"), ("w", ".")],
    [("e", "P1"), ("w", "greeting"), ("e", "P2"), ("w", "at"), ("e", "ORG1"), ("w", ".")],
    [("e", "P1"), ("w", "touring"), ("e", "ORG1"), ("w", "in"), ("e", "DATE1"), ("w", ".")],
    [("e", "P1"), ("w", "painting"), ("w", "near"), ("e", "ORG1"), ("w", "in"), ("e", "GPE1"), ("w", ".")],
    [("e", "P1"), ("w", "rehearsing"), ("w", "with"), ("e", "P2"), ("w", "in"), ("e", "GPE1"), ("w", ".")],
    [("e", "P1"), ("w", "waving"), ("w", "in"), ("e", "GPE1"), ("w", "in"), ("e", "DATE1"), ("w", ".")],
]

DISTRACTOR_PATTERNS = [
    [("e", "P"), ("w", "visited"), ("e", "ORG"), ("w", "in"), ("e", "GPE"), ("w", "during"), ("e", "DATE"), ("w", ".")],
    [("e", "P"), ("w", "opened"), ("e", "ORG"), ("w", "in"), ("e", "GPE"), ("w", "in"), ("e", "DATE"), ("w", ".")],
    [("e", "P"), ("w", "admired"), ("e", "ORG"), ("w", "in"), ("e", "GPE"), ("w", "on"), ("e", "DATE"), ("w", ".")],
]

FILLER_SENTENCES = [
    ["Critics", "praised", "the", "lively", "program", "."],
    ["The", "evening", "drew", "a", "large", "crowd", "."],
    ["Tickets", "sold", "out", "early", "."],
]
TAIL_FILLERS = [
    ["The", "program", "continued", "."],
    ["The", "audience", "stayed", "late", "."],
    ["The", "series", "resumed", "the", "next", "week", "."],
]

SLOT_TAGS = {"P": "PERSON", "ORG": "ORG", "GPE": "GPE", "DATE": "DATE"}


def detokenize(tokens: list[str]) -> str:
    """Join tokens with spaces, attaching closing punctuation to the
    previous token."""
    out = ""
    for tok in tokens:
        if out and tok in ".,!?;:":
            out += tok
        else:
            out += (" " if out else "") + tok
    return out


class _SentenceBuilder:
    def __init__(self):
        self.tokens: list[str] = []
        self.entities: list[tuple[tuple[str, ...], str, int]] = []

    def word(self, w: str):
        self.tokens.append(w)

    def entity(self, surface: tuple[str, ...], tag: str):
        self.entities.append((surface, tag, len(self.tokens)))
        self.tokens.extend(surface)


def _slot_tag(slot: str) -> str:
    core = slot.rstrip("0123456789")
    return SLOT_TAGS[core]


def _build_from_pattern(pattern, slot_values) -> _SentenceBuilder:
    sb = _SentenceBuilder()
    for kind, value in pattern:
        if kind == "w":
            sb.word(value)
        else:
            sb.entity(slot_values[value], _slot_tag(value))
    return sb


def _correct_sentence(pattern, slot_values) -> _SentenceBuilder:
    """The caption restated as an article sentence: 'was' after the first
    entity, a short tail before the period."""
    sb = _SentenceBuilder()
    first_entity_done = False
    for kind, value in pattern:
        if kind == "w" and value == ".":
            sb.word("that")
            sb.word("evening")
            sb.word(".")
        elif kind == "w":
            sb.word(value)
        else:
            sb.entity(slot_values[value], _slot_tag(value))
            if not first_entity_done:
                sb.word("was")
                first_entity_done = True
    return sb


def make_sample(
    rng: random.Random,
    sample_id: str,
    n_distractors: int = 3,
    long_article: bool = False,
    image_key: str | None = None,
) -> dict:
    pattern = CAPTION_PATTERNS[rng.randrange(len(CAPTION_PATTERNS))]
    slots_needed = [v for kind, v in pattern if kind == "e"]

    n_people = 2 + n_distractors
    firsts = rng.sample(FIRST_NAMES, n_people)
    lasts = rng.sample(LAST_NAMES, n_people)
    people = [(f, l) for f, l in zip(firsts, lasts)]
    orgs = rng.sample(ORGS, 1 + n_distractors)
    gpes = rng.sample(GPES, 1 + n_distractors)
    dates = [
        (d,)
        for d in rng.sample(YEARS, 1 + n_distractors)
    ]
    if rng.random() < 0.3:
        dates[0] = (rng.choice(MONTH_NAMES),)

    slot_values = {
        "P1": people[0], "P2": people[1],
        "ORG1": orgs[0], "GPE1": (gpes[0],), "DATE1": dates[0],
    }

    caption_sb = _build_from_pattern(pattern, slot_values)
    correct_sb = _correct_sentence(pattern, slot_values)

    distractor_sbs = []
    for k in range(n_distractors):
        d_pattern = DISTRACTOR_PATTERNS[rng.randrange(len(DISTRACTOR_PATTERNS))]
        d_values = {
            "P": people[2 + k], "ORG": orgs[1 + k],
            "GPE": (gpes[1 + k],), "DATE": dates[1 + k] if k + 1 < len(dates) else dates[-1],
        }
        distractor_sbs.append(_build_from_pattern(d_pattern, d_values))

    filler = _SentenceBuilder()
    for w in FILLER_SENTENCES[rng.randrange(len(FILLER_SENTENCES))]:
        filler.word(w)

    sentences = distractor_sbs + [filler]
    sentences.insert(rng.randrange(len(sentences) + 1), correct_sb)
    if long_article:
        while len(sentences) < 57:
            tail = _SentenceBuilder()
            for w in TAIL_FILLERS[len(sentences) % len(TAIL_FILLERS)]:
                tail.word(w)
            sentences.append(tail)

    entities = []
    for surface, tag, offset in caption_sb.entities:
        entities.append(
            {
                "surface": " ".join(surface), "tag": tag,
                "sentence_index": 0, "token_offset": offset,
                "source": "caption",
            }
        )
    for s_idx, sb in enumerate(sentences):
        for surface, tag, offset in sb.entities:
            entities.append(
                {
                    "surface": " ".join(surface), "tag": tag,
                    "sentence_index": s_idx, "token_offset": offset,
                    "source": "article",
                }
            )

    obj = {
        "id": sample_id,
        "caption": detokenize(caption_sb.tokens),
        "article": " ".join(detokenize(sb.tokens) for sb in sentences),
        "headline": "News from " + gpes[0],
        "entities": entities,
    }
    if image_key is not None:
        obj["image_features"] = image_key
    return obj


def make_corpus(
    n_samples: int,
    seed: int,
    n_distractors: int = 3,
    n_long: int = 0,
    id_prefix: str = "s",
    image_key: str | None = None,
) -> list[dict]:
    rng = random.Random(seed)
    out = []
    for i in range(n_samples):
        out.append(
            make_sample(
                rng,
                f"{id_prefix}{i:04d}",
                n_distractors=n_distractors,
                long_article=i < n_long,
                image_key=image_key,
            )
        )
    return out


def make_directional_corpus(n_samples: int = 24, seed: int = 41) -> list[dict]:
    """Corpus for the insertion direction check: every sample shares one
    image grid, so the article attention is the only input that can tell
    samples apart."""
    return make_corpus(
        n_samples, seed, n_distractors=3, id_prefix="dir", image_key="shared-grid"
    )


def corpus_jsonl(objs: list[dict]) -> str:
    return "".join(json.dumps(o, sort_keys=True) + "\n" for o in objs)


def make_overfit_corpus() -> list[dict]:
    """20 samples with short templates and a tight vocabulary."""
    return make_corpus(20, OVERFIT_SEED, n_distractors=2, id_prefix="ov")


def make_mini_corpus() -> list[dict]:
    """100 samples, two of them with overflow-length articles."""
    return make_corpus(100, MINI_SEED, n_distractors=3, n_long=2, id_prefix="s")


def corpus_tokens(objs: list[dict]) -> list[str]:
    """All lowercase word tokens the corpus can produce, sorted."""
    from .corpus import tokenize

    tokens: set[str] = set()
    for obj in objs:
        tokens.update(tokenize(obj["caption"]))
        tokens.update(tokenize(obj["article"]))
        tokens.update(tokenize(obj.get("headline", "")))
    return sorted(tokens)


def content_tokens(objs: list[dict]) -> list[str]:
    """Corpus tokens minus entity surface tokens; an embedding file built
    from these treats names as out-of-embedding words."""
    entity_tokens = {
        tok.lower()
        for obj in objs
        for e in obj.get("entities", [])
        for tok in str(e["surface"]).split()
    }
    return [t for t in corpus_tokens(objs) if t not in entity_tokens]


def embeddings_text(tokens: list[str], dim: int = DIM, seed: int = EMBEDDING_SEED) -> str:
    """Deterministic word-vector file covering the given tokens; values are
    rounded so the text round-trips bit-exactly."""
    rng = random.Random(seed)
    lines = []
    for tok in tokens:
        vec = [round(rng.uniform(-0.5, 0.5), 6) for _ in range(dim)]
        lines.append(tok + " " + " ".join(repr(v) for v in vec))
    return "\n".join(lines) + "\n"


def gazetteer_text() -> str:
    lines = []
    for org in ORGS:
        lines.append(" ".join(org) + "\tORG")
    for gpe in GPES:
        lines.append(gpe + "\tGPE")
    return "\n".join(lines) + "\n"


def write_bundled_data(outdir: str | Path) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    overfit = make_overfit_corpus()
    mini = make_mini_corpus()
    (outdir / "overfit_corpus.jsonl").write_text(corpus_jsonl(overfit), encoding="utf-8")
    (outdir / "mini_corpus.jsonl").write_text(corpus_jsonl(mini), encoding="utf-8")
    tokens = sorted(set(corpus_tokens(overfit)) | set(corpus_tokens(mini)))
    (outdir / "vectors.txt").write_text(embeddings_text(tokens), encoding="utf-8")
    (outdir / "gazetteer.tsv").write_text(gazetteer_text(), encoding="utf-8")


if __name__ == "__main__":
    write_bundled_data(Path(__file__).parent / "data")
