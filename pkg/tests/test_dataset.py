import numpy as np
import pytest

from tempograph.dataset import (build_query_stream, chronological_split, dataset_from_csv, ingest_csv,
                                load_dataset, partition_events, planted_threshold_stream, query_mask,
                                sample_negative, star_stream, touches)
from tempograph.errors import ConfigurationError, OrderingError, ParseError, SchemaError
from tempograph.types import EventKind
from tests.conftest import add, real_dataset_dir


class TestIngest:
    def test_three_rows_without_features(self, write_csv):
        path = write_csv([(10, 20, 1.0, 0), (20, 30, 2.0, 0), (10, 30, 2.0, 1)])
        result = ingest_csv(path)
        assert len(result.events) == 3
        assert result.feature_dim == 0
        assert all(e.kind is EventKind.ADD_EDGE for e in result.events)
        assert [e.seq for e in result.events] == [0, 1, 2]
        # dense ids in first-seen order
        assert [(e.src, e.dst) for e in result.events] == [(0, 1), (1, 2), (0, 2)]
        np.testing.assert_array_equal(result.state_labels, [0, 0, 1])

    def test_features_are_kept(self, write_csv):
        path = write_csv([(0, 1, 1.0, 0, 0.5, -1.5), (1, 2, 2.0, 0, 1.0, 2.0)])
        result = ingest_csv(path)
        assert result.feature_dim == 2
        np.testing.assert_array_equal(result.events[1].features, [1.0, 2.0])

    def test_decreasing_timestamp_reports_line(self, write_csv):
        path = write_csv([(0, 1, 5, 0), (1, 2, 3, 0)])
        with pytest.raises(OrderingError) as info:
            ingest_csv(path)
        assert info.value.line == 2

    def test_header_offsets_line_numbers(self, write_csv):
        path = write_csv([(0, 1, 5, 0), (1, 2, 3, 0)], header="u,i,ts,label")
        with pytest.raises(OrderingError) as info:
            ingest_csv(path, has_header=True)
        assert info.value.line == 3

    def test_bad_timestamp(self, write_csv):
        path = write_csv([(0, 1, "soon", 0)])
        with pytest.raises(ParseError):
            ingest_csv(path)

    def test_feature_arity_mismatch(self, write_csv):
        path = write_csv([(0, 1, 1.0, 0, 0.1), (1, 2, 2.0, 0, 0.1, 0.2)])
        with pytest.raises(SchemaError) as info:
            ingest_csv(path)
        assert info.value.line == 2

    def test_too_few_fields(self, write_csv):
        path = write_csv([(0, 1, 1.0)])
        with pytest.raises(ParseError):
            ingest_csv(path)

    def test_bipartite_destinations_follow_sources(self, write_csv):
        path = write_csv([(0, 0, 1.0, 0), (1, 0, 2.0, 0), (0, 1, 3.0, 0)])
        dataset = dataset_from_csv(path, bipartite=True)
        assert dataset.num_sources == 2
        assert dataset.num_nodes == 4
        assert [(e.src, e.dst) for e in dataset.events] == [(0, 2), (1, 2), (0, 3)]
        np.testing.assert_array_equal(dataset.destination_universe(), [2, 3])

    def test_load_by_csv_path(self, synthetic_csv):
        dataset = load_dataset(synthetic_csv)
        assert dataset.name == "synthetic"
        assert dataset.num_events == 400
        assert dataset.feature_dim == 2

    def test_load_by_manifest(self, tmp_path, synthetic_csv, monkeypatch):
        root = tmp_path / "data"
        (root / "toy").mkdir(parents=True)
        (root / "toy" / "edges.csv").write_text(synthetic_csv.read_text())
        (root / "toy" / "manifest.yaml").write_text("name: toy\npath: edges.csv\nfeature_dim: 2\n")
        monkeypatch.setenv("TEMPOGRAPH_DATA_DIR", str(root))
        dataset = load_dataset("toy")
        assert dataset.name == "toy"
        assert dataset.feature_dim == 2

    def test_manifest_feature_dim_is_checked(self, tmp_path, synthetic_csv, monkeypatch):
        root = tmp_path / "data"
        (root / "toy").mkdir(parents=True)
        (root / "toy" / "edges.csv").write_text(synthetic_csv.read_text())
        (root / "toy" / "manifest.yaml").write_text("path: edges.csv\nfeature_dim: 5\n")
        monkeypatch.setenv("TEMPOGRAPH_DATA_DIR", str(root))
        with pytest.raises(SchemaError):
            load_dataset("toy")

    @pytest.mark.slow
    def test_wikipedia_shape(self):
        real_dataset_dir("wikipedia")
        dataset = load_dataset("wikipedia")
        assert dataset.num_events == 157_474
        assert dataset.num_nodes == 9_227
        assert dataset.feature_dim == 172


class TestSplit:
    def test_hundred_events(self):
        split = chronological_split(star_stream(100))
        assert split.train == range(0, 70)
        assert split.val == range(70, 85)
        assert split.test == range(85, 100)

    def test_floor_rule(self):
        split = chronological_split(star_stream(101))
        assert split.train == range(0, 70)
        assert split.val == range(70, 85)
        assert split.test == range(85, 101)

    def test_bad_fractions(self):
        with pytest.raises(ConfigurationError):
            chronological_split(star_stream(100), fractions=(0.5, 0.5, 0.5))

    def test_empty_partition(self):
        with pytest.raises(ConfigurationError):
            chronological_split(star_stream(3))

    def test_inductive_reserves_late_node(self):
        events = []
        for seq in range(100):
            if seq >= 80 and seq % 2 == 0:
                events.append(add(9, seq % 9, seq, seq))
            else:
                events.append(add(seq % 9, (seq + 1) % 9, seq, seq))
        split = chronological_split(events, inductive=True, rng_seed=3)
        assert split.new_node_set == frozenset({9})

        test_events = partition_events(events, split, "test")
        mask = query_mask(test_events, split)
        queried = [e for e, m in zip(test_events, mask) if m]
        assert queried
        assert all(touches(e, split.new_node_set) for e in queried)
        assert not any(touches(e, split.new_node_set) for e in partition_events(events, split, "train"))

    def test_inductive_without_late_nodes(self):
        # every one of the 8 nodes shows up inside the first 70 events
        events = [add(seq % 8, (seq + 1) % 8, seq, seq) for seq in range(100)]
        with pytest.raises(ConfigurationError, match="after the train boundary"):
            chronological_split(events, inductive=True)

    @pytest.mark.parametrize("late_seqs, empty_part", [
        (range(90, 100), "val"),
        (range(72, 80), "test"),
    ])
    def test_inductive_partition_without_queries(self, late_seqs, empty_part):
        events = [add(9, seq % 9, seq, seq) if seq in late_seqs else add(seq % 9, (seq + 1) % 9, seq, seq)
                  for seq in range(100)]
        with pytest.raises(ConfigurationError, match=f"inductive {empty_part} partition has no queries"):
            chronological_split(events, inductive=True)

    def test_transductive_queries_everything(self):
        events = star_stream(100)
        split = chronological_split(events)
        assert query_mask(partition_events(events, split, "test"), split).all()


class TestNegativeSampling:
    def test_seeded_determinism(self):
        positive = add(0, 1, 1.0, 0)
        rng_a, rng_b = np.random.default_rng(11), np.random.default_rng(11)
        seq_a = [sample_negative(positive, np.arange(10), rng_a).dst for _ in range(50)]
        seq_b = [sample_negative(positive, np.arange(10), rng_b).dst for _ in range(50)]
        assert seq_a == seq_b
        assert set(seq_a) <= set(range(10))

    def test_single_node_universe(self, rng):
        negative = sample_negative(add(3, 4, 2.0, 7), [8], rng)
        assert negative.dst == 8
        assert negative.src == 3
        assert negative.timestamp == 2.0
        assert negative.seq == 7
        assert negative.label == 0
        assert negative.kind is EventKind.PREDICT_EDGE

    def test_uniform_frequencies(self):
        rng = np.random.default_rng(2024)
        positive = add(0, 1, 1.0, 0)
        counts = np.bincount([sample_negative(positive, np.arange(100), rng).dst for _ in range(10_000)],
                             minlength=100)
        sigma = np.sqrt(10_000 * 0.01 * 0.99)
        assert np.all(np.abs(counts - 100) <= 3 * sigma + 1)

    def test_query_stream_layout(self, rng):
        events = star_stream(4)
        stream = build_query_stream(events, np.arange(5), rng)
        assert len(stream) == 12
        for n in range(4):
            pos, neg, update = stream[3 * n:3 * n + 3]
            assert pos.kind is EventKind.PREDICT_EDGE and pos.label == 1
            assert (pos.src, pos.dst) == (update.src, update.dst)
            assert neg.kind is EventKind.PREDICT_EDGE and neg.label == 0
            assert pos.seq == neg.seq == update.seq

    def test_query_stream_mask(self, rng):
        events = star_stream(4)
        stream = build_query_stream(events, np.arange(5), rng, mask=np.array([True, False, False, True]))
        assert sum(e.kind is EventKind.PREDICT_EDGE for e in stream) == 4


def test_planted_threshold_labels(rng):
    events = planted_threshold_stream(200, span=1e4, threshold=0.5, rng=rng)
    queries = [e for e in events if e.kind is EventKind.PREDICT_EDGE]
    adds = {(e.src, e.dst): e.timestamp for e in events if e.kind is EventKind.ADD_EDGE}
    assert len(queries) == 200
    for q in queries:
        x = np.log1p(q.timestamp - adds[(q.src, q.dst)]) / np.log1p(1e4)
        assert q.label == int(x < 0.5)
    times = [e.timestamp for e in events]
    assert times == sorted(times)
    assert [e.seq for e in events] == list(range(len(events)))
