"""Caption metrics: BLEU-1..4, ROUGE-L, CIDEr, entity insertion
precision/recall, and the evaluator consensus degree.

BLEU aggregates clipped n-gram matches at the corpus level; ROUGE-L and
CIDEr average per-sample scores. Entity matching is per sample,
tag-constrained, greedy one-to-one in caption order, with an exact regime
(full surface equality, case-insensitive) and a partial regime (any token
overlap).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .entities import EntityTag
from .errors import DataError

ROUGE_BETA = 1.2
CIDER_SCALE = 10.0


def ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(
    candidates: list[list[str]],
    references: list[list[list[str]]],
    n: int,
) -> float:
    """Corpus BLEU-n: geometric mean of clipped precisions of orders 1..n
    with the brevity penalty. Zero when any order has no match."""
    if n not in (1, 2, 3, 4):
        raise ValueError(f"BLEU order must be 1..4, got {n}")
    if len(candidates) != len(references):
        raise ValueError("candidate and reference counts differ")
    matched = [0] * n
    total = [0] * n
    cand_len = 0
    ref_len = 0
    for cand, refs in zip(candidates, references):
        cand_len += len(cand)
        # Closest reference length; ties go to the shorter.
        ref_len += min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]
        for k in range(1, n + 1):
            counts = ngram_counts(cand, k)
            max_ref: Counter = Counter()
            for ref in refs:
                for gram, c in ngram_counts(ref, k).items():
                    if c > max_ref[gram]:
                        max_ref[gram] = c
            matched[k - 1] += sum(min(c, max_ref[gram]) for gram, c in counts.items())
            total[k - 1] += max(len(cand) - k + 1, 0)
    if cand_len == 0 or any(t == 0 or m == 0 for m, t in zip(matched, total)):
        return 0.0
    log_precision = sum(math.log(m / t) for m, t in zip(matched, total)) / n
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * math.exp(log_precision)


def bleu_n(candidate: list[str], references: list[list[str]], n: int) -> float:
    """Single-sample convenience wrapper over corpus_bleu."""
    return corpus_bleu([candidate], [references], n)


def clipped_precision(candidate: list[str], references: list[list[str]], n: int) -> float:
    """Clipped n-gram precision of one candidate (no brevity penalty, single
    order)."""
    counts = ngram_counts(candidate, n)
    max_ref: Counter = Counter()
    for ref in references:
        for gram, c in ngram_counts(ref, n).items():
            if c > max_ref[gram]:
                max_ref[gram] = c
    total = max(len(candidate) - n + 1, 0)
    if total == 0:
        return 0.0
    return sum(min(c, max_ref[gram]) for gram, c in counts.items()) / total


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def rouge_l(candidate: list[str], reference: list[str], beta: float = ROUGE_BETA) -> float:
    """LCS F-measure: F = ((1 + b^2) R P) / (R + b^2 P); zero when either
    side is empty or nothing matches."""
    if not candidate or not reference:
        return 0.0
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    rec = lcs / len(reference)
    prec = lcs / len(candidate)
    return ((1.0 + beta**2) * rec * prec) / (rec + beta**2 * prec)


class CiderScorer:
    """tf-idf weighted n-gram cosine similarity, orders 1..4, scaled by 10.

    Document frequencies come from the reference corpus, one reference per
    sample; at least two corpus references are required for the idf to be
    defined."""

    def __init__(self, corpus_references: list[list[str]]):
        if len(corpus_references) < 2:
            raise DataError(
                f"CIDEr needs at least 2 corpus references, got {len(corpus_references)}"
            )
        self.n_docs = len(corpus_references)
        self.df: list[Counter] = [Counter() for _ in range(4)]
        for ref in corpus_references:
            for k in range(1, 5):
                for gram in set(ngram_counts(ref, k)):
                    self.df[k - 1][gram] += 1

    def _tfidf(self, tokens: list[str], k: int) -> dict:
        vec = {}
        for gram, c in ngram_counts(tokens, k).items():
            df = max(self.df[k - 1][gram], 1)
            vec[gram] = c * math.log(self.n_docs / df)
        return vec

    def score(self, candidate: list[str], reference: list[str]) -> float:
        total = 0.0
        for k in range(1, 5):
            v_c = self._tfidf(candidate, k)
            v_r = self._tfidf(reference, k)
            dot = sum(w * v_r[g] for g, w in v_c.items() if g in v_r)
            norm_c = math.sqrt(sum(w * w for w in v_c.values()))
            norm_r = math.sqrt(sum(w * w for w in v_r.values()))
            if norm_c > 0 and norm_r > 0:
                total += dot / (norm_c * norm_r)
        return CIDER_SCALE * total / 4.0


def cider(
    candidates: list[list[str]],
    references: list[list[str]],
    corpus: list[list[str]] | None = None,
) -> float:
    """Mean CIDEr over samples; document frequencies are taken from `corpus`
    (defaults to the references themselves)."""
    if len(candidates) != len(references):
        raise ValueError("candidate and reference counts differ")
    scorer = CiderScorer(corpus if corpus is not None else references)
    if not candidates:
        return 0.0
    return sum(scorer.score(c, r) for c, r in zip(candidates, references)) / len(candidates)


Mention = tuple[str, EntityTag]  # (surface text, tag), caption order


def _normalize(surface: str) -> str:
    return " ".join(surface.lower().split())


def _mentions_match(pred: str, gold: str, regime: str) -> bool:
    if regime == "exact":
        return _normalize(pred) == _normalize(gold)
    if regime == "partial":
        return bool(set(_normalize(pred).split()) & set(_normalize(gold).split()))
    raise ValueError(f"unknown matching regime {regime!r}")


@dataclass
class PRResult:
    precision: float
    recall: float
    per_tag: dict[EntityTag, tuple[float, float, int]] = field(default_factory=dict)
    tp: int = 0
    n_pred: int = 0
    n_gold: int = 0


def _match_count(preds: list[Mention], golds: list[Mention], regime: str) -> int:
    matched = [False] * len(golds)
    tp = 0
    for surface, tag in preds:
        for j, (g_surface, g_tag) in enumerate(golds):
            if matched[j] or g_tag is not tag:
                continue
            if _mentions_match(surface, g_surface, regime):
                matched[j] = True
                tp += 1
                break
    return tp


def entity_precision_recall(
    predictions: list[list[Mention]],
    ground_truths: list[list[Mention]],
    regime: str,
) -> PRResult:
    """Micro-averaged precision/recall of inserted entities, with a per-tag
    breakdown. Matching is greedy one-to-one in caption order and
    tag-constrained."""
    if len(predictions) != len(ground_truths):
        raise ValueError("prediction and ground-truth sample counts differ")
    tp = 0
    n_pred = 0
    n_gold = 0
    tag_tp: Counter = Counter()
    tag_pred: Counter = Counter()
    tag_gold: Counter = Counter()
    for preds, golds in zip(predictions, ground_truths):
        tp += _match_count(preds, golds, regime)
        n_pred += len(preds)
        n_gold += len(golds)
        for tag in EntityTag:
            p_t = [m for m in preds if m[1] is tag]
            g_t = [m for m in golds if m[1] is tag]
            if not p_t and not g_t:
                continue
            tag_tp[tag] += _match_count(p_t, g_t, regime)
            tag_pred[tag] += len(p_t)
            tag_gold[tag] += len(g_t)
    per_tag = {}
    for tag in EntityTag:
        if tag not in tag_pred and tag not in tag_gold:
            continue
        p = tag_tp[tag] / tag_pred[tag] if tag_pred[tag] else 0.0
        r = tag_tp[tag] / tag_gold[tag] if tag_gold[tag] else 0.0
        per_tag[tag] = (p, r, tag_gold[tag])
    return PRResult(
        precision=tp / n_pred if n_pred else 0.0,
        recall=tp / n_gold if n_gold else 0.0,
        per_tag=per_tag,
        tp=tp,
        n_pred=n_pred,
        n_gold=n_gold,
    )


def consensus_degree(votes_a: int, votes_b: int) -> float:
    """1 - min/max of two vote counts; undefined when both are zero."""
    if votes_a < 0 or votes_b < 0:
        raise ValueError("vote counts must be nonnegative")
    if votes_a == 0 and votes_b == 0:
        raise ValueError("consensus undefined for zero votes on both sides")
    return 1.0 - min(votes_a, votes_b) / max(votes_a, votes_b)


def recall_per_tag_report(
    result: PRResult, training_support: dict[EntityTag, int] | None = None
) -> list[tuple[str, float, int]]:
    """(tag, recall, support) rows for tags present in the ground truth;
    support is the training-corpus entity count when provided, else the
    evaluated ground-truth count."""
    rows = []
    for tag, (_, recall, gold_count) in result.per_tag.items():
        if gold_count == 0:
            continue
        support = (
            training_support.get(tag, 0) if training_support is not None else gold_count
        )
        rows.append((tag.value, recall, support))
    return rows


@dataclass
class MetricReport:
    bleu: dict[int, float]
    rouge_l: float
    cider: float
    entity_exact: PRResult
    entity_partial: PRResult
    n_samples: int

    def to_json(self) -> dict:
        def pr(result: PRResult) -> dict:
            return {
                "precision": result.precision,
                "recall": result.recall,
                "tp": result.tp,
                "n_pred": result.n_pred,
                "n_gold": result.n_gold,
                "per_tag": {
                    tag.value: {"precision": p, "recall": r, "support": s}
                    for tag, (p, r, s) in result.per_tag.items()
                },
            }

        return {
            "bleu1": self.bleu[1],
            "bleu2": self.bleu[2],
            "bleu3": self.bleu[3],
            "bleu4": self.bleu[4],
            "rouge_l": self.rouge_l,
            "cider": self.cider,
            "entity": {"exact": pr(self.entity_exact), "partial": pr(self.entity_partial)},
            "n_samples": self.n_samples,
        }


def score_captions(
    candidates: list[list[str]],
    references: list[list[str]],
    pred_mentions: list[list[Mention]],
    gold_mentions: list[list[Mention]],
) -> MetricReport:
    """Full metric suite over aligned per-sample candidates/references and
    entity mention lists."""
    n = len(candidates)
    if not (len(references) == len(pred_mentions) == len(gold_mentions) == n):
        raise ValueError("all inputs must align per sample")
    bleu = {k: corpus_bleu(candidates, [[r] for r in references], k) for k in (1, 2, 3, 4)}
    rouge = (
        sum(rouge_l(c, r) for c, r in zip(candidates, references)) / n if n else 0.0
    )
    cider_score = cider(candidates, references)
    return MetricReport(
        bleu=bleu,
        rouge_l=rouge,
        cider=cider_score,
        entity_exact=entity_precision_recall(pred_mentions, gold_mentions, "exact"),
        entity_partial=entity_precision_recall(pred_mentions, gold_mentions, "partial"),
        n_samples=n,
    )
