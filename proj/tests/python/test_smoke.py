"""Smoke tests for the Python bindings."""

import _etcnas as et
import pytest


def small_space():
    s = et.SpaceConfig()
    s.nodes_per_cell = 2
    s.num_cells = 1
    return s


def test_space_size():
    assert et.space_size(small_space()) == "2500"
    assert et.space_size(et.SpaceConfig()) == "50625000000000000"


def test_decode_and_params():
    space = small_space()
    seq = et.sample_random(space, seed=3)
    assert len(seq) == space.sequence_length() == 8
    graph = et.decode(seq, space)
    assert graph.input_length == space.input_length
    pc = et.count_params(graph)
    assert pc.total >= pc.trainable > 0

    text = et.serialize(graph)
    back = et.deserialize(text)
    assert et.count_params(back).total == pc.total


def test_sampling_is_deterministic():
    space = small_space()
    assert et.sample_random(space, seed=7) == et.sample_random(space, seed=7)


def test_scores():
    s = et.scores([0, 0, 1, 1], [0, 1, 1, 1], num_classes=2)
    assert s.accuracy == pytest.approx(75.0)
    assert s.weighted_recall == s.accuracy
    assert s.weighted_f1 == pytest.approx(73.3333, abs=1e-3)


def test_dataset_roundtrip(tmp_path):
    ds = et.make_synthetic(30, 16, 2, seed=5)
    assert ds.size() == 30 and ds.num_classes() == 2
    path = str(tmp_path / "tiny.etcd")
    et.write_dataset(ds, path)
    back = et.read_dataset(path)
    assert back.features == ds.features
    assert back.labels == ds.labels
    assert back.class_names == ds.class_names


def test_run_search_with_python_evaluator():
    space = small_space()

    def reward(seq):
        return sum(seq) / (4.0 * len(seq))

    report = et.run_search("rs", space, reward, trials=20, seed=1)
    assert report.strategy == "rs"
    assert len(report.trials) == 20
    assert et.top_n(report, 1) >= et.top_n(report, 10)
