"""Filling template-caption placeholders with article entities.

Three strategies: uniform random within tag (RandIns), sentence ranking by
cosine similarity against the template embedding (CtxIns), and the decoder's
article-attention weights (AttIns). CtxIns and AttIns consume candidates
without replacement across same-tag placeholders, falling back to the
top-ranked candidate once all are used; a placeholder with no candidate at
all stays in the output as a MISS.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from .corpus import Article
from .embeddings import EmbeddingTable
from .entities import EntityIndex, EntityTag, NamedEntity, Placeholder, TemplateCaption
from .errors import DataError
from .model.decoder import AttentionTrace

RAND_INS = "rand"
CTX_INS = "ctx"
ATT_INS = "att"
STRATEGIES = (RAND_INS, CTX_INS, ATT_INS)


@dataclass(frozen=True)
class InsertionChoice:
    tag: EntityTag
    strategy: str
    entity: NamedEntity | None  # None records a MISS

    @property
    def is_miss(self) -> bool:
        return self.entity is None


@dataclass
class FilledCaption:
    tokens: list[str]
    provenance: list[InsertionChoice]

    def mentions(self) -> list[tuple[str, EntityTag]]:
        """(surface, tag) pairs of the inserted entities, caption order,
        misses skipped."""
        return [
            (c.entity.surface_text, c.tag) for c in self.provenance if not c.is_miss
        ]


@dataclass
class SentenceRanking:
    order: list[int]   # sentence indices, best first
    scores: list[float]  # aligned with order, non-increasing


def _fill(template: TemplateCaption, choices: list[InsertionChoice]) -> FilledCaption:
    tokens: list[str] = []
    k = 0
    for t in template.tokens:
        if isinstance(t, Placeholder):
            choice = choices[k]
            if choice.is_miss:
                tokens.append(t.token)
            else:
                tokens.extend(w.lower() for w in choice.entity.surface)
            k += 1
        else:
            tokens.append(t)
    return FilledCaption(tokens=tokens, provenance=choices)


def rand_insert(template: TemplateCaption, index: EntityIndex, seed: int) -> FilledCaption:
    """Independent uniform draws from the same-tag candidates; repeats
    allowed."""
    rng = random.Random(seed)
    choices: list[InsertionChoice] = []
    for ph in template.placeholders:
        candidates = index.get(ph.tag)
        if not candidates:
            choices.append(InsertionChoice(ph.tag, RAND_INS, None))
        else:
            choices.append(
                InsertionChoice(ph.tag, RAND_INS, candidates[rng.randrange(len(candidates))])
            )
    return _fill(template, choices)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b) / (na * nb)


def _avg_embedding(tokens: list[str], table: EmbeddingTable) -> np.ndarray:
    out = np.zeros(table.dim)
    if not tokens:
        return out
    for tok in tokens:
        vec = table.get(tok)
        if vec is not None:
            out += vec
    return out / len(tokens)


def rank_sentences_ctx(
    template: TemplateCaption, article: Article, table: EmbeddingTable
) -> SentenceRanking:
    """Rank article sentences by cosine similarity to the average embedding
    of the template's word tokens (placeholders excluded). Zero embeddings
    score 0; ties break toward the lower sentence index."""
    words = [t for t in template.tokens if not isinstance(t, Placeholder)]
    t_emb = _avg_embedding(words, table)
    scores = [
        _cosine(t_emb, _avg_embedding(sent, table)) for sent in article.sentences
    ]
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return SentenceRanking(order=order, scores=[scores[i] for i in order])


def _take_ranked(
    tag: EntityTag,
    sentence_order: list[int],
    index: EntityIndex,
    consumed: set[tuple[EntityTag, int, int]],
    strategy: str,
) -> InsertionChoice:
    """First unconsumed tag candidate along the sentence order; falls back to
    the overall top-ranked candidate when everything is consumed."""
    ranked = [
        ent
        for s in sentence_order
        for ent in index.in_sentence(tag, s)
    ]
    if not ranked:
        return InsertionChoice(tag, strategy, None)
    for ent in ranked:
        key = (tag, ent.sentence_index, ent.token_offset)
        if key not in consumed:
            consumed.add(key)
            return InsertionChoice(tag, strategy, ent)
    return InsertionChoice(tag, strategy, ranked[0])


def ctx_insert(
    template: TemplateCaption,
    article: Article,
    index: EntityIndex,
    table: EmbeddingTable,
) -> FilledCaption:
    """One cosine ranking per caption; placeholders processed left to right,
    entities taken in order of appearance within each ranked sentence."""
    ranking = rank_sentences_ctx(template, article, table)
    consumed: set[tuple[EntityTag, int, int]] = set()
    choices = [
        _take_ranked(ph.tag, ranking.order, index, consumed, CTX_INS)
        for ph in template.placeholders
    ]
    return _fill(template, choices)


def _beta_sentence_order(beta: np.ndarray, n_sentences: int) -> list[int]:
    """Scan order of real sentences implied by one attention vector.

    Slots map to sentences one to one; when the article is longer than the
    attention width, the last slot stands for the whole tail group, expanded
    in document order. Ties break toward the lower slot."""
    m = beta.shape[0]
    n_slots = min(n_sentences, m)
    slots = sorted(range(n_slots), key=lambda j: (-float(beta[j]), j))
    order: list[int] = []
    for j in slots:
        if n_sentences > m and j == m - 1:
            order.extend(range(m - 1, n_sentences))
        else:
            order.append(j)
    return order


def att_insert(
    template: TemplateCaption,
    trace: AttentionTrace,
    article: Article,
    index: EntityIndex,
) -> FilledCaption:
    """Insert using each placeholder's own timestep attention vector; the
    consumption rules match ctx_insert."""
    if len(trace) != len(template.tokens):
        raise DataError(
            f"attention trace has {len(trace)} steps for a "
            f"{len(template.tokens)}-token template"
        )
    n_sentences = len(article.sentences)
    consumed: set[tuple[EntityTag, int, int]] = set()
    choices: list[InsertionChoice] = []
    for pos, tok in enumerate(template.tokens):
        if not isinstance(tok, Placeholder):
            continue
        order = _beta_sentence_order(trace.betas[pos], n_sentences)
        choices.append(_take_ranked(tok.tag, order, index, consumed, ATT_INS))
    return _fill(template, choices)


def filled_to_json(sample_id: str, template: TemplateCaption, filled: FilledCaption) -> dict:
    return {
        "id": sample_id,
        "template": template.model_tokens(),
        "filled": filled.tokens,
        "provenance": [
            {
                "tag": c.tag.value,
                "strategy": c.strategy,
                "surface": None if c.is_miss else c.entity.surface_text,
                "sentence_index": None if c.is_miss else c.entity.sentence_index,
            }
            for c in filled.provenance
        ],
    }
