from __future__ import annotations

import numpy as np
import pytest

from threec.graph import topological_order, validate
from threec.sdt import assess_cohort
from threec.synth import (
    PERSONAS,
    SynthConfig,
    gen_cohort,
    gen_concept_dag,
    layer_sizes,
    load_latent_labels,
)


class TestConfig:
    def test_defaults(self):
        c = SynthConfig()
        assert (c.n_learners, c.n_concepts, c.n_items, c.dag_layers) == (100, 50, 40, 5)
        assert (c.prereq_prob, c.mastery_base, c.mastery_penalty, c.slip, c.guess, c.mention_prob) == (0.15, 0.8, 0.2, 0.1, 0.2, 0.6)
        assert c.persona_mix == {p: 0.2 for p in PERSONAS}

    @pytest.mark.parametrize("bad", [
        {"n_items": 60}, {"n_learners": 0}, {"slip": 1.5}, {"mention_prob": -0.1},
        {"persona_mix": {"WC": 0.5}}, {"persona_mix": {"XX": 1.0}},
    ])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            SynthConfig(**bad)

    def test_paper_scale(self):
        c = SynthConfig.paper_scale()
        assert (c.n_learners, c.n_concepts, c.n_items) == (150, 211, 45)


class TestDag:
    def test_one_layer_has_no_edges(self):
        assert gen_concept_dag(SynthConfig(dag_layers=1, prereq_prob=1.0))[1] == []

    def test_full_two_layers(self):
        config = SynthConfig(n_concepts=7, n_items=3, dag_layers=2, prereq_prob=1.0)
        a, b = layer_sizes(7, 2)
        layer_of, edges = gen_concept_dag(config)
        assert len(edges) == a * b
        assert all(layer_of[u] < layer_of[v] for u, v in edges)

    @pytest.mark.parametrize("seed", range(5))
    def test_acyclic(self, seed):
        config = SynthConfig(prereq_prob=0.5, seed=seed)
        _, edges = gen_concept_dag(config)
        assert topological_order(config.n_concepts, edges) is not None


class TestCohort:
    def test_default_is_valid(self, default_cohort):
        g, _ = default_cohort
        assert validate(g) == []
        assert (g.n_learners, g.n_concepts, g.n_assessments) == (100, 50, 40)

    def test_deterministic(self):
        config = SynthConfig(n_learners=20, n_concepts=15, n_items=10, seed=3)
        (g1, t1), (g2, t2) = gen_cohort(config), gen_cohort(config)
        assert g1 == g2 and g1.fingerprint() == g2.fingerprint()
        assert t1 == t2
        assert gen_cohort(SynthConfig(n_learners=20, n_concepts=15, n_items=10, seed=4))[0] != g1

    def test_full_disclosure_leaves_no_latent(self):
        _, truth = gen_cohort(SynthConfig(n_learners=20, mention_prob=1.0))
        assert truth.latent_labels == {}

    def test_noiseless_responses_equal_mastery(self):
        g, truth = gen_cohort(SynthConfig(n_learners=20, slip=0.0, guess=0.0))
        for (i, j), correct in g.responses.items():
            assert correct == truth.true_mastery[(i, g.item_concept[j])]

    def test_disclosed_and_latent_cover_assessed_pairs(self, default_cohort):
        g, truth = default_cohort
        disclosed = set(g.know_edges) | set(g.dontknow_edges)
        latent = set(truth.latent_labels)
        assert not disclosed & latent
        assert disclosed | latent == {(i, k) for i in range(g.n_learners) for k in g.assessed_concepts()}

    def test_disclosed_states_match_perception(self, default_cohort):
        g, truth = default_cohort
        assert all(truth.true_perceived[e] == 1 for e in g.know_edges)
        assert all(truth.true_perceived[e] == 0 for e in g.dontknow_edges)
        assert all(truth.true_perceived[e] == v for e, v in truth.latent_labels.items())

    def test_every_learner_answers_every_item(self, default_cohort):
        g, _ = default_cohort
        assert len(g.responses) == g.n_learners * g.n_assessments

    def test_structure_signal(self):
        g, truth = gen_cohort(SynthConfig(persona_mix={"WC": 1.0}, mention_prob=0.5, n_learners=200))
        parents = {k: [a for a, b in g.prereq_edges if b == k] for k in range(g.n_concepts)}
        all_known, none_known = [], []
        for i in range(g.n_learners):
            for k, ps in parents.items():
                if not ps:
                    continue
                states = [truth.true_perceived[(i, p)] for p in ps]
                if all(states):
                    all_known.append(truth.true_perceived[(i, k)])
                elif not any(states):
                    none_known.append(truth.true_perceived[(i, k)])
        assert np.mean(all_known) > np.mean(none_known)

    def test_overconfident_cohort_has_low_specificity(self):
        g, _ = gen_cohort(SynthConfig(persona_mix={"OC": 1.0}, mention_prob=1.0))
        rows = assess_cohort(g, {i: (set(), set()) for i in range(g.n_learners)})
        assert np.mean([r.metrics.specificity for r in rows]) < 0.5

    def test_sidecar_round_trip(self, tmp_path, default_cohort):
        g, truth = default_cohort
        truth.save(g, tmp_path / "truth.json")
        assert load_latent_labels(tmp_path / "truth.json", g) == truth.latent_labels
