from collections import defaultdict

import pytest

from tempograph.analyzer import count_missing_updates, sweep, write_report_csv
from tempograph.dataset import load_dataset, random_stream, star_stream
from tempograph.errors import ConfigurationError, ContractViolation, UnsupportedError
from tests.conftest import add, query, real_dataset_dir


def brute_force(events, batch_size, hop):
    """Recount every input against the graph at its batch start, no caching."""
    adjacency = defaultdict(set)
    affected = missing_total = 0
    for start in range(0, len(events), batch_size):
        batch = events[start:start + batch_size]
        for j, e in enumerate(batch):
            scope = set()
            for node in (e.src, e.dst):
                reached = {node}
                for _ in range(hop):
                    reached |= {n for r in reached for n in adjacency[r]}
                scope |= reached
            missing = sum(1 for u in batch[:j] if u.src in scope or u.dst in scope)
            affected += missing > 0
            missing_total += missing
        for e in batch:
            adjacency[e.src].add(e.dst)
            adjacency[e.dst].add(e.src)
    return affected / len(events), missing_total / len(events)


def test_batch_size_one_never_misses(small_stream):
    report = count_missing_updates(small_stream, 1, 1)
    assert (report.ratio_affected, report.avg_missing_per_input) == (0.0, 0.0)
    assert report.inputs_counted == len(small_stream)


def test_hand_enumerated_batch():
    a, b, c, d = 0, 1, 2, 3
    events = [add(a, b, 1, 0), add(c, d, 2, 1), add(a, c, 3, 2)]
    report = count_missing_updates(events, 3, 1)
    assert report.ratio_affected == pytest.approx(1 / 3)
    assert report.avg_missing_per_input == pytest.approx(2 / 3)


def test_star_graph_ratio():
    report = count_missing_updates(star_stream(200), 10, 1)
    assert report.ratio_affected == pytest.approx(0.9)


def test_second_hop_sees_more(rng):
    events = random_stream(500, 40, rng)
    one = count_missing_updates(events, 50, 1)
    two = count_missing_updates(events, 50, 2)
    assert two.ratio_affected >= one.ratio_affected
    assert two.avg_missing_per_input >= one.avg_missing_per_input


@pytest.mark.parametrize("batch_size, hop", [(7, 1), (25, 1), (25, 2), (100, 2)])
def test_matches_brute_force(rng, batch_size, hop):
    events = random_stream(300, 25, rng)
    report = count_missing_updates(events, batch_size, hop)
    ratio, avg = brute_force(events, batch_size, hop)
    assert report.ratio_affected == pytest.approx(ratio, abs=1e-12)
    assert report.avg_missing_per_input == pytest.approx(avg, abs=1e-12)


def test_empty_stream():
    report = count_missing_updates([], 10, 1)
    assert (report.ratio_affected, report.avg_missing_per_input, report.inputs_counted) == (0.0, 0.0, 0)


@pytest.mark.parametrize("batch_size", [1, 2, 10, 64])
@pytest.mark.parametrize("hop", [1, 2])
def test_fresh_nodes_never_miss(batch_size, hop):
    # every edge joins two nodes nothing else touches
    events = [add(2 * k, 2 * k + 1, k, k) for k in range(256)]
    report = count_missing_updates(events, batch_size, hop)
    assert (report.ratio_affected, report.avg_missing_per_input) == (0.0, 0.0)
    assert report.inputs_counted == 256


def test_errors(small_stream):
    with pytest.raises(UnsupportedError):
        count_missing_updates(small_stream, 10, 3)
    with pytest.raises(ConfigurationError):
        count_missing_updates(small_stream, 0, 1)
    with pytest.raises(ContractViolation):
        count_missing_updates([query(0, 1, 1, 0)], 10, 1)


def test_sweep_is_non_decreasing(rng):
    events = random_stream(600, 30, rng)
    reports = sweep(events, [1, 10, 25, 50, 100, 200], 1)
    assert [r.batch_size for r in reports] == [1, 10, 25, 50, 100, 200]
    ratios = [r.ratio_affected for r in reports]
    assert ratios[0] == 0.0
    assert all(later >= earlier for earlier, later in zip(ratios, ratios[1:]))


def test_sweep_single_size(small_stream):
    reports = sweep(small_stream, [1], 1)
    assert len(reports) == 1
    assert reports[0].ratio_affected == 0.0


def test_sweep_with_workers_matches_serial(small_stream):
    serial = sweep(small_stream, [5, 20], 2)
    parallel = sweep(small_stream, [5, 20], 2, workers=2)
    assert serial == parallel


def test_sweep_needs_sizes(small_stream):
    with pytest.raises(ConfigurationError):
        sweep(small_stream, [], 1)


def test_report_csv(tmp_path, small_stream):
    path = write_report_csv(sweep(small_stream, [1, 10], 1), "toy", tmp_path / "out" / "missing.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "dataset,batch_size,hop,ratio,avg,inputs"
    assert lines[1].startswith("toy,1,1,0.000000,0.000000,")
    assert len(lines) == 3


@pytest.mark.slow
def test_wikipedia_batch_ten():
    real_dataset_dir("wikipedia")
    report = count_missing_updates(load_dataset("wikipedia").events, 10, 1)
    assert report.ratio_affected == pytest.approx(0.23, abs=0.03)
    assert report.avg_missing_per_input == pytest.approx(0.25, abs=0.03)


@pytest.mark.slow
def test_uci_reference_ratios():
    real_dataset_dir("uci")
    events = load_dataset("uci").events
    single = count_missing_updates(events, 1, 1)
    assert (single.ratio_affected, single.avg_missing_per_input) == (0.0, 0.0)
    ten = count_missing_updates(events, 10, 1)
    assert ten.ratio_affected == pytest.approx(0.70, abs=0.03)
    assert ten.avg_missing_per_input == pytest.approx(0.95, abs=0.10)
    fifty = count_missing_updates(events, 50, 1)
    assert fifty.ratio_affected == pytest.approx(0.91, abs=0.03)
    assert fifty.avg_missing_per_input == pytest.approx(3.67, abs=0.4)
