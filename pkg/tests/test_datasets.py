import numpy as np
import pytest

from yono.datasets import (
    Dataset,
    SyntheticBlobSpec,
    Task,
    TaskStream,
    generate_blobs,
    load_csv,
    split_stream,
    task_sizes,
    write_csv,
)
from yono.errors import ClassCollision, DimensionMismatch, EmptyDataset, IndivisibleClasses, InvalidSpec, ParseError


def test_blobs_shape_and_determinism():
    spec = SyntheticBlobSpec(n_classes=4, samples_per_class=30, input_dim=5, seed=3)
    a, b = generate_blobs(spec), generate_blobs(spec)
    assert a.x.shape == (120, 5) and a.classes == [0, 1, 2, 3]
    np.testing.assert_array_equal(a.x, b.x)
    with pytest.raises(InvalidSpec):
        SyntheticBlobSpec(center_separation=0)


def test_blob_centers_on_sphere():
    spec = SyntheticBlobSpec(n_classes=3, samples_per_class=4000, input_dim=8, center_separation=5.0)
    d = generate_blobs(spec)
    for k in range(3):
        assert np.linalg.norm(d.x[d.y == k].mean(0)) == pytest.approx(5.0, abs=0.1)


def test_task_sizes():
    assert task_sizes(10, 5) == [2] * 5
    assert task_sizes(100, 10, "half") == [50] + [5] * 10
    with pytest.raises(IndivisibleClasses):
        task_sizes(10, 3)
    with pytest.raises(IndivisibleClasses):
        task_sizes(10, 0)


def test_split_stream_partitions_classes_and_samples():
    d = generate_blobs(SyntheticBlobSpec(n_classes=6, samples_per_class=50, input_dim=3))
    stream = split_stream(d, 3, order_seed=4)
    assert len(stream) == 3
    assert sorted(stream.classes) == list(range(6))
    for t in stream:
        assert len(t.classes) == 2
        for k in t.classes:
            assert np.sum(t.train.y == k) == 40 and np.sum(t.test.y == k) == 10
    joint = stream.joint()
    assert len(joint.train) == 240 and len(joint.test) == 60
    again = split_stream(d, 3, order_seed=4)
    assert [t.classes for t in again] == [t.classes for t in stream]


def test_stream_rejects_overlap():
    d = Dataset(np.zeros((2, 1)), np.array([0, 1]))
    t0 = Task(0, (0,), d.subset([0]), d.subset([0]))
    with pytest.raises(ClassCollision):
        TaskStream([t0, Task(1, (0,), d.subset([0]), d.subset([0]))], 1, 0)
    with pytest.raises(ClassCollision):
        TaskStream([Task(0, (0,), d, d)], 1, 0)


def test_csv_round_trip(tmp_path):
    d = Dataset(np.array([[0.1, 2.5], [1 / 3, -4.0]]), np.array([3, 0]))
    write_csv(tmp_path / "d.csv", d)
    back = load_csv(tmp_path / "d.csv", input_dim=2)
    np.testing.assert_array_equal(back.x, d.x)
    np.testing.assert_array_equal(back.y, d.y)


@pytest.mark.parametrize(
    "text, line",
    [
        ("a,b,label\n1,2,0\n1,x,0\n", 3),
        ("a,b,label\n1,2\n", 2),
        ("a,b,cls\n1,2,0\n", 1),
        ("a,label\n1,-1\n", 2),
    ],
)
def test_csv_parse_errors_name_the_line(tmp_path, text, line):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(ParseError) as info:
        load_csv(p)
    assert info.value.line == line


def test_csv_empty_and_dimension(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(EmptyDataset):
        load_csv(p)
    p.write_text("a,label\n")
    with pytest.raises(EmptyDataset):
        load_csv(p)
    p.write_text("a,label\n1,0\n")
    with pytest.raises(DimensionMismatch):
        load_csv(p, input_dim=3)


def nearest_center_accuracy(train, test):
    centers = np.stack([train.x[train.y == k].mean(0) for k in train.classes])
    d = ((test.x[:, None, :] - centers[None]) ** 2).sum(-1)
    return np.mean(np.array(train.classes)[d.argmin(1)] == test.y)


def test_well_separated_blobs_are_learnable():
    d = generate_blobs(SyntheticBlobSpec(n_classes=2, samples_per_class=200, input_dim=8,
                                         center_separation=10.0, within_class_std=0.1, seed=1))
    t = split_stream(d, 1).tasks[0]
    assert nearest_center_accuracy(t.train, t.test) > 0.99


def test_overlapping_blobs_near_chance():
    d = generate_blobs(SyntheticBlobSpec(n_classes=4, samples_per_class=2000, input_dim=8,
                                         center_separation=0.01, within_class_std=10.0, seed=2))
    t = split_stream(d, 1).tasks[0]
    assert abs(nearest_center_accuracy(t.train, t.test) - 0.25) < 0.05
