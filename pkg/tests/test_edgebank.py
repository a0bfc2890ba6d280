from collections import Counter

import numpy as np
import pytest

from tempograph.autodiff import bce_loss, grad_check
from tempograph.dataset import random_stream
from tempograph.edgebank import (EdgeBankMemory, EdgeBankModel, EdgeBankRule, LinearTimeModel, LinearVariant,
                                 edgebank_predict, edgebank_update, linear_time_predict)
from tempograph.errors import ConfigurationError, ContractViolation
from tempograph.graph_store import TemporalGraphStore
from tempograph.scheduler import sequential_oracle
from tempograph.types import DecoupledConfig, Event, EventKind, edge_key
from tests.conftest import add, query

ALL_RULES = [EdgeBankRule.parse("inf"), EdgeBankRule.parse("tw", 10.0), EdgeBankRule.parse("th"),
             EdgeBankRule.parse("re")]


class TestMemory:
    def test_first_sighting(self):
        mem = EdgeBankMemory()
        edgebank_update(mem, add(1, 2, 4.0, 0))
        assert mem.lookup((1, 2)).count == 1
        assert edgebank_predict(mem, EdgeBankRule.parse("inf"), (2, 1), 5.0, 1) is True

    def test_three_sightings(self):
        mem = EdgeBankMemory()
        for seq, t in enumerate([1.0, 2.0, 6.0]):
            edgebank_update(mem, add(2, 1, t, seq) if seq % 2 else add(1, 2, t, seq))
        seen = mem.lookup(edge_key(1, 2))
        assert seen.count == 3
        assert seen.time == 6.0
        assert seen.seq == 2

    def test_replay_matches_recount(self, rng):
        events = random_stream(1000, 30, rng)
        mem = EdgeBankMemory()
        for e in events:
            edgebank_update(mem, e)
        counts = Counter(e.key for e in events)
        last = {e.key: (e.timestamp, e.seq) for e in events}
        assert mem.seen_count == dict(counts)
        assert mem.last_seen_time == {k: v[0] for k, v in last.items()}
        assert mem.last_seen_seq == {k: v[1] for k, v in last.items()}

    def test_rejects_non_add(self):
        with pytest.raises(ContractViolation):
            edgebank_update(EdgeBankMemory(), Event(EventKind.REMOVE_EDGE, 1, 2, 1.0, 0))


class TestRules:
    def test_parse_defaults(self):
        assert EdgeBankRule.parse("th").param == 1000
        assert EdgeBankRule.parse("re").param == 2
        assert EdgeBankRule.parse("inf").param is None
        assert EdgeBankRule.parse("th", 50).label == "edgebank:th(50)"

    def test_parse_errors(self):
        with pytest.raises(ConfigurationError):
            EdgeBankRule.parse("tw")
        with pytest.raises(ConfigurationError):
            EdgeBankRule.parse("forever")
        with pytest.raises(ConfigurationError):
            EdgeBankRule.parse("th", -1)

    @pytest.mark.parametrize("rule", ALL_RULES, ids=lambda r: r.variant.value)
    def test_unseen_edge_is_negative(self, rule):
        mem = EdgeBankMemory()
        edgebank_update(mem, add(0, 1, 1.0, 0))
        assert edgebank_predict(mem, rule, (0, 2), 2.0, 1) is False

    def test_threshold_boundary(self):
        mem = EdgeBankMemory()
        edgebank_update(mem, add(0, 1, 1.0, 5))
        rule = EdgeBankRule.parse("th", 1000)
        assert edgebank_predict(mem, rule, (0, 1), 50.0, 1005) is True
        assert edgebank_predict(mem, rule, (0, 1), 50.0, 1006) is False

    def test_time_window(self):
        mem = EdgeBankMemory()
        edgebank_update(mem, add(0, 1, 10.0, 0))
        rule = EdgeBankRule.parse("tw", 5.0)
        assert edgebank_predict(mem, rule, (1, 0), 15.0, 9) is True
        assert edgebank_predict(mem, rule, (1, 0), 15.5, 9) is False

    def test_repeat_rule_on_recurring_edge(self):
        mem = EdgeBankMemory()
        rule = EdgeBankRule.parse("re", 3)
        answers = []
        seq = 0
        for sighting in range(5):
            for filler in range(4):
                edgebank_update(mem, add(10 + filler, 20 + filler, float(seq), seq))
                seq += 1
            edgebank_update(mem, add(0, 1, float(seq), seq))
            seq += 1
            answers.append(edgebank_predict(mem, rule, (0, 1), float(seq), seq))
        assert answers == [False, False, True, True, True]

    def test_inf_positives_are_seen_edges(self, rng):
        events = random_stream(1000, 20, rng)
        mem = EdgeBankMemory()
        for e in events:
            edgebank_update(mem, e)
        seen = {e.key for e in events}
        rule = EdgeBankRule.parse("inf")
        t, seq = events[-1].timestamp, len(events)
        positives = {edge_key(i, j) for i in range(20) for j in range(20)
                     if edgebank_predict(mem, rule, (i, j), t, seq)}
        assert positives == seen

    def test_predict_is_memoryless(self, rng):
        mem = EdgeBankMemory()
        for e in random_stream(100, 5, rng):
            edgebank_update(mem, e)
        rule = EdgeBankRule.parse("th", 10)
        answers = {edgebank_predict(mem, rule, (0, 1), 1e6, 120) for _ in range(5)}
        assert len(answers) == 1


class TestEdgeBankModel:
    def test_scores_through_engine(self):
        model = EdgeBankModel(EdgeBankRule.parse("inf"))
        stream = [query(0, 1, 1.0, 0), add(0, 1, 1.0, 0), query(1, 0, 2.0, 1), query(0, 2, 2.0, 1, label=0),
                  add(0, 2, 2.0, 1)]
        out = sequential_oracle(model, model.new_store(), stream, DecoupledConfig())
        np.testing.assert_array_equal(out.values, [0.0, 1.0, 0.0])
        assert model.parameters() == {}

    def test_view_is_frozen(self):
        model = EdgeBankModel(EdgeBankRule.parse("inf"))
        store = model.new_store()
        view = model.extract_view(store, [query(0, 1, 1.0, 0)], DecoupledConfig())
        model.process_memory_batch(store, [add(0, 1, 1.0, 0)])
        assert model.predict([(view, query(0, 1, 1.0, 0))]).values[0] == 0.0
        with pytest.raises(TypeError):
            view[(0, 1)] = None


class TestLinearTimeModel:
    def test_zero_parameters_give_half(self):
        model = LinearTimeModel(LinearVariant.NODE_AWARE, 100.0)
        assert linear_time_predict(model, 50.0, 10.0, 20.0, 30.0) == pytest.approx(0.5)
        assert model.w.shape == (3, 1)

    def test_edge_only_has_two_parameters(self):
        model = LinearTimeModel.from_name("edge", 100.0)
        assert sum(p.size for p in model.parameters().values()) == 2
        assert sum(p.size for p in LinearTimeModel.from_name("node", 100.0).parameters().values()) == 4

    def test_score_decreases_with_gap(self):
        model = LinearTimeModel(LinearVariant.EDGE_ONLY, 1000.0)
        model.w.values[...] = -4.0
        model.b.values[...] = 1.0
        scores = [linear_time_predict(model, 1000.0, 1000.0 - gap) for gap in (0.0, 1.0, 10.0, 100.0, 999.0)]
        assert all(later < earlier for earlier, later in zip(scores, scores[1:]))

    def test_steep_sigmoid_recovers_hard_threshold(self):
        model = LinearTimeModel(LinearVariant.EDGE_ONLY, 1000.0)
        scale, threshold = 1e4, 0.5
        model.w.values[...] = -scale
        model.b.values[...] = scale * threshold
        assert model.decision_boundary() == pytest.approx(threshold)
        assert linear_time_predict(model, 10.0, 9.0) > 0.99
        assert linear_time_predict(model, 900.0, 0.0) < 0.01

    def test_decision_boundary_errors(self):
        with pytest.raises(ContractViolation):
            LinearTimeModel(LinearVariant.EDGE_ONLY, 10.0).decision_boundary()
        with pytest.raises(ContractViolation):
            LinearTimeModel(LinearVariant.NODE_AWARE, 10.0).decision_boundary()

    def test_bad_span_or_variant(self):
        with pytest.raises(ConfigurationError):
            LinearTimeModel(LinearVariant.EDGE_ONLY, 0.0)
        with pytest.raises(ConfigurationError):
            LinearTimeModel.from_name("quadratic", 10.0)

    def test_reads_store_times(self):
        model = LinearTimeModel(LinearVariant.NODE_AWARE, 100.0)
        store = TemporalGraphStore()
        model.process_memory_batch(store, [add(0, 1, 3.0, 0), add(1, 2, 7.0, 1)])
        q = query(0, 1, 10.0, 2)
        view = model.extract_view(store, [q], DecoupledConfig())
        assert model.gaps(q.timestamp, view.edge_time_of(0, 1), view.node_time_of(0), view.node_time_of(1)) == \
            [7.0, 7.0, 3.0]

    def test_gradients(self, rng):
        model = LinearTimeModel(LinearVariant.NODE_AWARE, 500.0)
        model.w.values[...] = rng.normal(size=(3, 1))
        model.b.values[...] = rng.normal(size=1)
        gaps = rng.uniform(0, 500, size=(12, 3))
        labels = rng.integers(0, 2, size=12)
        err = grad_check(lambda: bce_loss(model.score_gaps(gaps), labels), list(model.parameters().values()))
        assert err < 1e-4
