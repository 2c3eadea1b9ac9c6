import pytest

from newscap.corpus import CaptionRecord, ingest_jsonl, tokenize
from newscap.entities import (
    EntityTag,
    Gazetteer,
    NamedEntity,
    Placeholder,
    annotate,
    build_entity_index,
    entity_from_json,
    entity_to_json,
    load_external_annotations,
    load_gazetteer,
    template_from_model_tokens,
    templatize_caption,
)
from newscap.errors import DataError

EINSTEIN = "Albert Einstein taught in Princeton University in 1921"


def einstein_gazetteer():
    return Gazetteer(
        {"Albert Einstein": EntityTag.PERSON, "Princeton University": EntityTag.ORG}
    )


def caption_record(text, article_id="a1"):
    return CaptionRecord(article_id=article_id, tokens=tokenize(text), raw_text=text)


class TestAnnotate:
    def test_gazetteer_and_date(self):
        ents = annotate(EINSTEIN, einstein_gazetteer())
        assert [(e.tag, e.sentence_index, e.token_offset) for e in ents] == [
            (EntityTag.PERSON, 0, 0),
            (EntityTag.ORG, 0, 4),
            (EntityTag.DATE, 0, 7),
        ]
        assert ents[0].surface == ("Albert", "Einstein")

    def test_no_entities(self):
        assert annotate("the cat sat", Gazetteer()) == []

    def test_capitalization_heuristic(self):
        ents = annotate("Alice met Bob", Gazetteer())
        assert [(e.tag, e.token_offset) for e in ents] == [
            (EntityTag.PERSON, 0),
            (EntityTag.PERSON, 2),
        ]

    def test_sentence_initial_stopword_skipped(self):
        ents = annotate("The cat sat near Lena.", Gazetteer())
        assert [(e.surface, e.tag) for e in ents] == [(("Lena",), EntityTag.PERSON)]

    def test_long_capital_runs_not_person(self):
        ents = annotate("one Aa Bb Cc Dd two", Gazetteer())
        assert ents == []

    def test_month_names_are_dates(self):
        ents = annotate("They met in March", Gazetteer())
        assert [(e.surface, e.tag) for e in ents] == [(("March",), EntityTag.DATE)]

    def test_year_bounds(self):
        assert annotate("in 0999", Gazetteer()) == []
        assert annotate("in 2101", Gazetteer()) == []
        assert [e.tag for e in annotate("in 1000 and 2100", Gazetteer())] == [
            EntityTag.DATE, EntityTag.DATE,
        ]

    def test_longest_gazetteer_match_wins(self):
        gaz = Gazetteer({"Rio Verde": EntityTag.GPE, "Rio Verde Institute": EntityTag.ORG})
        ents = annotate("the Rio Verde Institute wrote", gaz)
        assert [(e.surface_text, e.tag) for e in ents] == [
            ("Rio Verde Institute", EntityTag.ORG)
        ]

    def test_deterministic(self):
        text = "Omar Reyes visited Harbor Institute in Oslo during 1987."
        gaz = Gazetteer({"Harbor Institute": EntityTag.ORG, "Oslo": EntityTag.GPE})
        assert annotate(text, gaz) == annotate(text, gaz)

    def test_multi_sentence_positions(self):
        ents = annotate("Alice ran. Bob sat.", Gazetteer())
        assert [(e.sentence_index, e.token_offset) for e in ents] == [(0, 0), (1, 0)]


class TestGazetteerFile:
    def test_load(self, tmp_path):
        path = tmp_path / "gaz.tsv"
        path.write_text("Crescent Hall\tORG\nOslo\tGPE\n")
        gaz = load_gazetteer(path)
        assert gaz.size == 2
        ents = annotate("at Crescent Hall in Oslo", gaz)
        assert [e.tag for e in ents] == [EntityTag.ORG, EntityTag.GPE]

    def test_bad_tag(self, tmp_path):
        path = tmp_path / "gaz.tsv"
        path.write_text("Pluto\tPLANET\n")
        with pytest.raises(DataError, match="PLANET"):
            load_gazetteer(path)

    def test_bad_format(self, tmp_path):
        path = tmp_path / "gaz.tsv"
        path.write_text("just a surface\n")
        with pytest.raises(DataError):
            load_gazetteer(path)


class TestExternalAnnotations:
    def _bundle(self, tmp_path, entities):
        import json

        path = tmp_path / "c.jsonl"
        obj = {
            "id": "a1",
            "caption": "JoAnn Falletta leading a performance.",
            "article": "JoAnn Falletta led the show. The crowd cheered.",
            "entities": entities,
        }
        path.write_text(json.dumps(obj) + "\n")
        report = ingest_jsonl(path)
        assert not report.errors, report.errors
        return report.bundles[0]

    def test_caption_entity(self, tmp_path):
        bundle = self._bundle(
            tmp_path,
            [{"surface": "JoAnn Falletta", "tag": "PERSON", "sentence_index": 0, "token_offset": 0}],
        )
        ext = load_external_annotations(bundle)
        assert len(ext.caption) == 1 and not ext.article
        assert ext.caption[0].surface == ("JoAnn", "Falletta")

    def test_empty(self, tmp_path):
        bundle = self._bundle(tmp_path, [])
        ext = load_external_annotations(bundle)
        assert ext.caption == [] and ext.article == []

    def test_unknown_tag_rejected(self, tmp_path):
        bundle = self._bundle(
            tmp_path,
            [{"surface": "JoAnn", "tag": "PLANET", "sentence_index": 0, "token_offset": 0}],
        )
        with pytest.raises(DataError, match="PLANET"):
            load_external_annotations(bundle)

    def test_offset_out_of_range(self, tmp_path):
        bundle = self._bundle(
            tmp_path,
            [{"surface": "JoAnn", "tag": "PERSON", "sentence_index": 0, "token_offset": 99}],
        )
        with pytest.raises(DataError, match="99"):
            load_external_annotations(bundle)

    def test_surface_mismatch(self, tmp_path):
        bundle = self._bundle(
            tmp_path,
            [{"surface": "Wrong Name", "tag": "PERSON", "sentence_index": 0, "token_offset": 0}],
        )
        with pytest.raises(DataError, match="does not match"):
            load_external_annotations(bundle)

    def test_article_source(self, tmp_path):
        bundle = self._bundle(
            tmp_path,
            [
                {"surface": "JoAnn Falletta", "tag": "PERSON", "sentence_index": 0,
                 "token_offset": 0, "source": "article"},
            ],
        )
        ext = load_external_annotations(bundle)
        assert not ext.caption and len(ext.article) == 1


class TestTemplatize:
    def test_worked_example(self):
        caption = caption_record(EINSTEIN)
        ents = annotate(EINSTEIN, einstein_gazetteer())
        template = templatize_caption(caption, ents)
        assert template.model_tokens() == [
            "PERSON_", "taught", "in", "ORGANIZATION_", "in", "DATE_",
        ]
        assert " ".join(template.model_tokens()) == "PERSON_ taught in ORGANIZATION_ in DATE_"

    def test_no_entities(self):
        caption = caption_record("the cat sat")
        template = templatize_caption(caption, [])
        assert template.model_tokens() == ["the", "cat", "sat"]
        assert template.placeholders == []

    def test_ordinals(self):
        caption = caption_record("Alice met Bob")
        ents = annotate("Alice met Bob", Gazetteer())
        template = templatize_caption(caption, ents)
        assert template.tokens == [
            Placeholder(EntityTag.PERSON, 1), "met", Placeholder(EntityTag.PERSON, 2),
        ]

    def test_reversibility(self):
        caption = caption_record(EINSTEIN)
        ents = annotate(EINSTEIN, einstein_gazetteer())
        template = templatize_caption(caption, ents)
        rebuilt = template.substitute([e.surface for e in template.sources])
        assert rebuilt == caption.tokens

    def test_overlap_keeps_longer_then_earlier(self):
        caption = caption_record("Rio Verde Institute wrote")
        ents = [
            NamedEntity(("Rio", "Verde"), EntityTag.GPE, 0, 0),
            NamedEntity(("Rio", "Verde", "Institute"), EntityTag.ORG, 0, 0),
        ]
        template = templatize_caption(caption, ents)
        assert template.model_tokens() == ["ORGANIZATION_", "wrote"]

    def test_overlap_tie_prefers_earlier(self):
        caption = caption_record("Alpha Beta Gamma ran")
        ents = [
            NamedEntity(("Beta", "Gamma"), EntityTag.ORG, 0, 1),
            NamedEntity(("Alpha", "Beta"), EntityTag.ORG, 0, 0),
        ]
        template = templatize_caption(caption, ents)
        assert template.model_tokens() == ["ORGANIZATION_", "gamma", "ran"]

    def test_placeholder_count_matches_entities(self):
        caption = caption_record("Alice met Bob in Oslo in 1987")
        ents = annotate("Alice met Bob in Oslo in 1987", Gazetteer({"Oslo": EntityTag.GPE}))
        template = templatize_caption(caption, ents)
        assert len(template.placeholders) == len(ents)

    def test_out_of_range_entity_rejected(self):
        caption = caption_record("short one")
        with pytest.raises(DataError):
            templatize_caption(
                caption, [NamedEntity(("x", "y", "z"), EntityTag.ORG, 0, 1)]
            )

    def test_parse_back_from_model_tokens(self):
        template = template_from_model_tokens(
            ["PERSON_", "met", "PERSON_", "at", "ORGANIZATION_"]
        )
        assert [p.ordinal for p in template.placeholders] == [1, 2, 1]
        assert [p.tag for p in template.placeholders] == [
            EntityTag.PERSON, EntityTag.PERSON, EntityTag.ORG,
        ]


class TestEntityIndex:
    def _article(self, tmp_path):
        import json

        path = tmp_path / "c.jsonl"
        obj = {
            "id": "a1",
            "caption": "x.",
            "article": "Sent zero here. Sent one here. Sent two here. Sent three here.",
        }
        path.write_text(json.dumps(obj) + "\n")
        return ingest_jsonl(path).bundles[0].article

    def test_orders_by_sentence_then_offset(self, tmp_path):
        article = self._article(tmp_path)
        ents = [
            NamedEntity(("B",), EntityTag.PERSON, 0, 2),
            NamedEntity(("A",), EntityTag.PERSON, 0, 1),
            NamedEntity(("C",), EntityTag.PERSON, 3, 0),
            NamedEntity(("D",), EntityTag.PERSON, 1, 0),
        ]
        index = build_entity_index(article, ents)
        assert [e.surface[0] for e in index.get(EntityTag.PERSON)] == ["A", "B", "D", "C"]

    def test_empty(self, tmp_path):
        index = build_entity_index(self._article(tmp_path), [])
        assert len(index) == 0 and index.tags() == []

    def test_duplicates_dropped(self, tmp_path):
        article = self._article(tmp_path)
        ents = [
            NamedEntity(("A",), EntityTag.PERSON, 0, 1),
            NamedEntity(("A",), EntityTag.PERSON, 0, 1),
        ]
        index = build_entity_index(article, ents)
        assert len(index.get(EntityTag.PERSON)) == 1

    def test_json_roundtrip(self):
        ent = NamedEntity(("JoAnn", "Falletta"), EntityTag.PERSON, 2, 5)
        assert entity_from_json(entity_to_json(ent)) == ent
