from __future__ import annotations

import json

import pytest
from hypothesis import given, settings, strategies as st

from conftest import fc_a_document
from threec.graph import (
    GraphParseError,
    GraphValidationError,
    concept_depths,
    from_document,
    latent_pairs,
    load_graph,
    mention_partition,
    save_graph,
    to_document,
    topological_order,
    validate,
)


class TestLoad:
    def test_counts_forced_by_input(self, tmp_path, small_doc):
        p = tmp_path / "g.json"
        p.write_text(json.dumps(small_doc))
        g = load_graph(p)
        assert (g.n_learners, g.n_concepts, g.n_assessments) == (2, 3, 2)
        assert len(g.prereq_edges) == 2

    def test_two_cycle_rejected(self, small_doc):
        small_doc["prerequisites"] = [["A", "B"], ["B", "A"]]
        with pytest.raises(GraphValidationError) as err:
            from_document(small_doc)
        assert "cycle" in err.value.codes

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_graph(tmp_path / "absent.json")

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(GraphParseError):
            load_graph(p)

    def test_missing_field_is_parse_error(self, small_doc):
        del small_doc["concepts"][0]["id"]
        with pytest.raises(GraphParseError):
            from_document(small_doc)

    def test_responses_csv_merged(self, tmp_path, small_doc):
        small_doc["responses"] = []
        p = tmp_path / "g.json"
        p.write_text(json.dumps(small_doc))
        csv_path = tmp_path / "r.csv"
        csv_path.write_text("learner,assessment,correct\ns1,q1,1\ns2,q2,0\n")
        g = load_graph(p, csv_path)
        assert g.responses == {(0, 0): 1, (1, 1): 0}

    def test_fc_a_shape(self, tmp_path):
        p = tmp_path / "fc_a.json"
        p.write_text(json.dumps(fc_a_document()))
        g = load_graph(p)
        assert (g.n_learners, g.n_concepts, g.n_assessments) == (109, 211, 48)
        assert len(g.prereq_edges) == 226
        assert len(g.know_edges) == 6349
        assert sum(len(mention_partition(g, i)[2]) for i in range(g.n_learners)) == 2187
        assert len(latent_pairs(g)) == 2187


class TestValidate:
    def test_valid_graph_has_no_diagnostics(self, small_graph):
        assert validate(small_graph) == []

    def test_item_mapped_twice(self, small_doc):
        small_doc["assessments"].append({"id": "q1", "label": "", "concept": "B"})
        codes = [d.code for d in validate(small_doc)]
        assert codes == ["duplicate_item_mapping"]
        assert validate(small_doc)[0].ids == ("q1",)

    def test_perception_conflict(self, small_doc):
        small_doc["perceptions"].append({"learner": "s1", "concept": "A", "state": "dont_know"})
        (d,) = validate(small_doc)
        assert d.code == "perception_conflict" and d.ids == ("s1", "A")

    def test_dangling_endpoint(self, small_doc):
        small_doc["prerequisites"].append(["A", "Z"])
        assert "dangling_endpoint" in [d.code for d in validate(small_doc)]

    def test_bad_response_value(self, small_doc):
        small_doc["responses"][0]["correct"] = 2
        assert [d.code for d in validate(small_doc)] == ["bad_response"]

    def test_learner_without_responses_is_legal(self, small_doc):
        small_doc["learners"].append("s3")
        assert validate(small_doc) == []


class TestPartition:
    def test_set_arithmetic(self):
        doc = {
            "learners": ["s"],
            "concepts": [{"id": f"k{i}"} for i in range(1, 5)],
            "assessments": [{"id": f"q{i}", "concept": f"k{i}"} for i in range(1, 5)],
            "perceptions": [
                {"learner": "s", "concept": "k1", "state": "know"},
                {"learner": "s", "concept": "k2", "state": "dont_know"},
            ],
        }
        g = from_document(doc)
        assert mention_partition(g, "s") == ({0}, {1}, {2, 3})

    def test_unassessed_mentions_are_excluded(self, small_graph):
        known, unknown, latent = mention_partition(small_graph, "s1")
        # B is mentioned but never assessed
        assert known == {0} and unknown == set() and latent == {2}

    def test_unknown_learner(self, small_graph):
        with pytest.raises(KeyError):
            mention_partition(small_graph, "nobody")

    def test_partition_covers_assessed_set(self, default_cohort):
        g, _ = default_cohort
        kq = set(g.assessed_concepts())
        for i in range(g.n_learners):
            a, b, c = mention_partition(g, i)
            assert a | b | c == kq
            assert not (a & b or a & c or b & c)


class TestRoundTrip:
    def test_save_load_identical(self, tmp_path, default_cohort):
        g, _ = default_cohort
        p = tmp_path / "g.json"
        save_graph(g, p)
        assert load_graph(p) == g
        assert load_graph(p).fingerprint() == g.fingerprint()

    def test_order_insensitive(self, small_doc):
        shuffled = dict(small_doc)
        shuffled["perceptions"] = list(reversed(small_doc["perceptions"]))
        shuffled["prerequisites"] = list(reversed(small_doc["prerequisites"]))
        assert from_document(shuffled) == from_document(small_doc)
        assert to_document(from_document(shuffled)) == to_document(from_document(small_doc))


class TestTopology:
    def test_depths_on_chain(self, small_graph):
        assert concept_depths(small_graph) == [0, 1, 2]

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 9), st.lists(st.tuples(st.integers(0, 8), st.integers(0, 8)), max_size=20))
    def test_cycle_reported_iff_no_order(self, n, raw):
        edges = sorted({(a % n, b % n) for a, b in raw if a % n != b % n})
        doc = {"concepts": [{"id": f"k{i}"} for i in range(n)], "prerequisites": [[f"k{a}", f"k{b}"] for a, b in edges]}
        has_cycle = "cycle" in [d.code for d in validate(doc)]
        order = topological_order(n, edges)
        assert has_cycle == (order is None)
        if order is not None:
            pos = {v: i for i, v in enumerate(order)}
            assert all(pos[a] < pos[b] for a, b in edges)
