import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from newscap.entities import EntityTag
from newscap.errors import DataError
from newscap.metrics import (
    MetricReport,
    bleu_n,
    cider,
    clipped_precision,
    consensus_degree,
    corpus_bleu,
    entity_precision_recall,
    recall_per_tag_report,
    rouge_l,
    score_captions,
)

P = EntityTag.PERSON
ORG = EntityTag.ORG


class TestBleu:
    def test_identity(self):
        assert bleu_n("a b c".split(), ["a b c".split()], 1) == pytest.approx(1.0)
        assert bleu_n("a b c d".split(), ["a b c d".split()], 4) == pytest.approx(1.0)

    def test_clipping_classic_reference(self):
        # "the" appears twice in the reference, so the clipped count is 2.
        cand = "the the the the".split()
        ref = "the cat is on the mat".split()
        assert clipped_precision(cand, [ref], 1) == pytest.approx(2 / 4)

    def test_clipping_single_occurrence_reference(self):
        cand = "the the the the".split()
        assert clipped_precision(cand, ["the cat".split()], 1) == pytest.approx(1 / 4)

    def test_brevity_penalty(self):
        # Same unigram content, candidate shorter than reference.
        cand = ["a"]
        ref = ["a", "a", "a"]
        expected = math.exp(1.0 - 3.0 / 1.0) * 1.0
        assert bleu_n(cand, [ref], 1) == pytest.approx(expected)

    def test_no_match_is_zero(self):
        assert bleu_n("x y".split(), ["a b".split()], 1) == 0.0

    def test_empty_candidate_contributes_zero(self):
        score = corpus_bleu([[], "a b".split()], [["a b".split()], ["a b".split()]], 1)
        # matched 2 of 2 total unigrams; candidate total counts only the
        # nonempty candidate; BP kicks in for the missing length.
        assert 0.0 < score < 1.0

    def test_corpus_level_aggregation(self):
        # Corpus BLEU pools counts rather than averaging per-sample scores.
        cands = ["a b".split(), "x y".split()]
        refs = [["a b".split()], ["x q".split()]]
        pooled = corpus_bleu(cands, refs, 1)
        assert pooled == pytest.approx(3 / 4)

    def test_multi_reference_max_clip(self):
        cand = "a a b".split()
        refs = ["a b".split(), "a a".split()]
        assert clipped_precision(cand, refs, 1) == pytest.approx(3 / 3)

    def test_order_validation(self):
        with pytest.raises(ValueError):
            bleu_n(["a"], [["a"]], 5)


class TestRougeL:
    def test_identity(self):
        assert rouge_l("a b c".split(), "a b c".split()) == pytest.approx(1.0)

    def test_hand_case_formula(self):
        cand = "a b c d".split()
        ref = "a c d".split()
        # LCS=3, R=1.0, P=0.75, beta=1.2.
        expected = (1 + 1.2**2) * 1.0 * 0.75 / (1.0 + 1.2**2 * 0.75)
        assert expected == pytest.approx(1.83 / 2.08)
        assert rouge_l(cand, ref) == pytest.approx(expected, abs=1e-12)

    def test_disjoint_is_zero(self):
        assert rouge_l("a b".split(), "x y".split()) == 0.0

    def test_empty_sides(self):
        assert rouge_l([], "a".split()) == 0.0
        assert rouge_l("a".split(), []) == 0.0

    def test_subsequence_not_substring(self):
        assert rouge_l("a x b y c".split(), "a b c".split()) == pytest.approx(
            (1 + 1.44) * 1.0 * 0.6 / (1.0 + 1.44 * 0.6)
        )


class TestCider:
    def test_identity_is_ten(self):
        refs = [
            "a cat sat on the mat".split(),
            "dogs bark at the moon".split(),
            "birds fly over water".split(),
        ]
        score = cider([refs[0]], [refs[0]], corpus=refs)
        assert score == pytest.approx(10.0, abs=1e-9)

    def test_zero_overlap(self):
        refs = ["a b c d".split(), "p q r s".split()]
        assert cider(["w x y z".split()], [refs[0]], corpus=refs) == pytest.approx(0.0)

    def test_needs_two_references(self):
        with pytest.raises(DataError):
            cider([["a"]], [["a"]], corpus=[["a"]])

    def test_matches_bruteforce_tfidf_cosine(self):
        corpus_refs = [
            "the cat sat".split(),
            "the dog ran far".split(),
            "a bird sang".split(),
        ]
        cand = "the cat ran".split()
        ref = corpus_refs[0]

        # Brute force: enumerate n-grams, idf = log(N / df), cosine per order.
        def bf_vec(tokens, n):
            grams = Counter(
                tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)
            )
            vec = {}
            for g, c in grams.items():
                df = sum(
                    1
                    for r in corpus_refs
                    if g in {tuple(r[i : i + n]) for i in range(len(r) - n + 1)}
                )
                vec[g] = c * math.log(len(corpus_refs) / max(df, 1))
            return vec

        total = 0.0
        for n in range(1, 5):
            vc, vr = bf_vec(cand, n), bf_vec(ref, n)
            dot = sum(w * vr[g] for g, w in vc.items() if g in vr)
            nc = math.sqrt(sum(w * w for w in vc.values()))
            nr = math.sqrt(sum(w * w for w in vr.values()))
            total += dot / (nc * nr) if nc > 0 and nr > 0 else 0.0
        expected = 10.0 * total / 4.0
        assert cider([cand], [ref], corpus=corpus_refs) == pytest.approx(expected, abs=1e-12)

    def test_mean_over_samples(self):
        refs = ["a b c d".split(), "p q r s".split()]
        score = cider([refs[0], "zz yy xx ww".split()], refs, corpus=refs)
        assert score == pytest.approx(5.0, abs=1e-9)


class TestEntityPR:
    def test_partial_vs_exact_falletta(self):
        preds = [[("Falletta", P)]]
        golds = [[("JoAnn Falletta", P)]]
        exact = entity_precision_recall(preds, golds, "exact")
        partial = entity_precision_recall(preds, golds, "partial")
        assert exact.tp == 0 and partial.tp == 1
        assert partial.precision == 1.0 and partial.recall == 1.0

    def test_perfect_match(self):
        preds = [[("JoAnn Falletta", P), ("Buffalo Philharmonic", ORG)]]
        for regime in ("exact", "partial"):
            res = entity_precision_recall(preds, preds, regime)
            assert res.precision == 1.0 and res.recall == 1.0

    def test_arithmetic(self):
        preds = [[("A B", P), ("C D", P)]]
        golds = [[("A B", P), ("X Y", P), ("Z W", P), ("Q R", P)]]
        res = entity_precision_recall(preds, golds, "exact")
        assert res.precision == pytest.approx(0.5)
        assert res.recall == pytest.approx(0.25)

    def test_case_insensitive_exact(self):
        preds = [[("joann falletta", P)]]
        golds = [[("JoAnn Falletta", P)]]
        assert entity_precision_recall(preds, golds, "exact").tp == 1

    def test_tag_constrained(self):
        preds = [[("Acme", P)]]
        golds = [[("Acme", ORG)]]
        assert entity_precision_recall(preds, golds, "partial").tp == 0

    def test_one_to_one_matching(self):
        preds = [[("Ford", P), ("Ford", P)]]
        golds = [[("Ford", P)]]
        res = entity_precision_recall(preds, golds, "exact")
        assert res.tp == 1 and res.precision == 0.5 and res.recall == 1.0

    def test_per_tag_breakdown(self):
        preds = [[("A", P), ("Acme", ORG)]]
        golds = [[("A", P), ("B", P), ("Acme", ORG)]]
        res = entity_precision_recall(preds, golds, "exact")
        p_p, p_r, p_support = res.per_tag[P]
        assert (p_p, p_r, p_support) == (1.0, 0.5, 2)
        o_p, o_r, o_support = res.per_tag[ORG]
        assert (o_p, o_r, o_support) == (1.0, 1.0, 1)

    def test_exact_tp_subset_of_partial_tp_random(self):
        import random

        rng = random.Random(0)
        names = ["Ann Lee", "Ann", "Bo Ruiz", "Ruiz", "Cy Dale", "Dale Cy"]
        for _ in range(200):
            preds = [[(rng.choice(names), P) for _ in range(rng.randint(0, 3))]]
            golds = [[(rng.choice(names), P) for _ in range(rng.randint(0, 3))]]
            exact = entity_precision_recall(preds, golds, "exact")
            partial = entity_precision_recall(preds, golds, "partial")
            assert partial.tp >= exact.tp
            assert partial.precision >= exact.precision
            assert partial.recall >= exact.recall

    def test_recall_per_tag_report(self):
        preds = [[("A", P)]]
        golds = [[("A", P), ("B", P)]]
        res = entity_precision_recall(preds, golds, "partial")
        rows = recall_per_tag_report(res)
        assert rows == [("PERSON", 0.5, 2)]
        rows = recall_per_tag_report(res, training_support={P: 137})
        assert rows == [("PERSON", 0.5, 137)]

    def test_tag_absent_from_gold_omitted(self):
        preds = [[("A", P)]]
        golds = [[]]
        res = entity_precision_recall(preds, golds, "partial")
        assert recall_per_tag_report(res) == []


class TestConsensus:
    def test_tie(self):
        assert consensus_degree(10, 10) == 0.0

    def test_unanimous(self):
        assert consensus_degree(10, 0) == 1.0

    def test_arithmetic(self):
        assert consensus_degree(12, 6) == 0.5

    def test_symmetric(self):
        assert consensus_degree(3, 9) == consensus_degree(9, 3)

    def test_both_zero_rejected(self):
        with pytest.raises(ValueError):
            consensus_degree(0, 0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            consensus_degree(-1, 5)

    @given(st.integers(0, 1000), st.integers(0, 1000))
    @settings(max_examples=60, deadline=None)
    def test_range(self, a, b):
        if a == 0 and b == 0:
            return
        assert 0.0 <= consensus_degree(a, b) <= 1.0


class TestScoreCaptions:
    def _inputs(self):
        cands = ["maria duke performing at crescent hall .".split()] * 3
        refs = [
            "maria duke performing at crescent hall .".split(),
            "omar reyes speaking at summit forum .".split(),
            "lena falk arriving in porto .".split(),
        ]
        pred_m = [[("Maria Duke", P)], [("Maria Duke", P)], [("Maria Duke", P)]]
        gold_m = [[("Maria Duke", P)], [("Omar Reyes", P)], [("Lena Falk", P)]]
        return cands, refs, pred_m, gold_m

    def test_report_shape(self):
        report = score_captions(*self._inputs())
        assert isinstance(report, MetricReport)
        assert set(report.bleu) == {1, 2, 3, 4}
        obj = report.to_json()
        assert obj["n_samples"] == 3
        assert obj["entity"]["partial"]["precision"] >= obj["entity"]["exact"]["precision"] - 1e-12

    def test_self_scoring_maximal(self):
        refs = [
            "a b c d e".split(),
            "f g h i j".split(),
            "k l m n o".split(),
        ]
        mentions = [[("X", P)], [("Y", P)], [("Z", P)]]
        report = score_captions(refs, refs, mentions, mentions)
        for k in (1, 2, 3, 4):
            assert report.bleu[k] == pytest.approx(1.0)
        assert report.rouge_l == pytest.approx(1.0)
        assert report.cider == pytest.approx(10.0, abs=1e-9)

    def test_permutation_invariance(self):
        cands, refs, pred_m, gold_m = self._inputs()
        a = score_captions(cands, refs, pred_m, gold_m)
        order = [2, 0, 1]
        b = score_captions(
            [cands[i] for i in order], [refs[i] for i in order],
            [pred_m[i] for i in order], [gold_m[i] for i in order],
        )
        assert a.bleu == b.bleu
        assert a.rouge_l == pytest.approx(b.rouge_l)
        assert a.cider == pytest.approx(b.cider)
        assert a.entity_exact.precision == b.entity_exact.precision
