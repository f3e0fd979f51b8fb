"""Task streams for class-incremental runs: Gaussian blobs and CSV files."""
import csv
from dataclasses import dataclass

import numpy as np

from .errors import ClassCollision, DimensionMismatch, EmptyDataset, IndivisibleClasses, InvalidSpec, ParseError


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __len__(self):
        return self.y.shape[0]

    @property
    def dim(self):
        return self.x.shape[1]

    @property
    def classes(self):
        return sorted(np.unique(self.y).tolist())

    def subset(self, idx):
        return Dataset(self.x[idx], self.y[idx])


@dataclass(frozen=True)
class SyntheticBlobSpec:
    n_classes: int = 10
    samples_per_class: int = 500
    input_dim: int = 32
    center_separation: float = 5.5
    within_class_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 1 or self.samples_per_class < 1 or self.input_dim < 1:
            raise InvalidSpec("class count, samples per class and dimension must be >= 1")
        if not self.center_separation > 0 or not self.within_class_std > 0:
            raise InvalidSpec("separation and std must be positive")


def generate_blobs(spec):
    """Isotropic Gaussian classes around centers on a sphere of radius ``center_separation``."""
    rng = np.random.default_rng(spec.seed)
    centers = rng.standard_normal((spec.n_classes, spec.input_dim))
    centers *= spec.center_separation / np.linalg.norm(centers, axis=1, keepdims=True)
    y = np.repeat(np.arange(spec.n_classes), spec.samples_per_class)
    x = centers[y] + spec.within_class_std * rng.standard_normal((y.size, spec.input_dim))
    return Dataset(x, y)


@dataclass
class Task:
    task_id: int
    classes: tuple
    train: Dataset
    test: Dataset


@dataclass
class TaskStream:
    tasks: list
    input_dim: int
    order_seed: int

    def __post_init__(self):
        seen = set()
        for t in self.tasks:
            cls = set(t.classes)
            if cls & seen:
                raise ClassCollision(f"task {t.task_id} repeats classes {sorted(cls & seen)}")
            seen |= cls
            for part in (t.train, t.test):
                if len(part) and not set(np.unique(part.y).tolist()) <= cls:
                    raise ClassCollision(f"task {t.task_id} holds labels outside its class set")

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    @property
    def classes(self):
        return [k for t in self.tasks for k in t.classes]

    def joint(self):
        """All tasks merged into one (used for the joint-training upper bound)."""
        cat = lambda parts: Dataset(np.concatenate([p.x for p in parts]), np.concatenate([p.y for p in parts]))
        return Task(0, tuple(self.classes), cat([t.train for t in self.tasks]), cat([t.test for t in self.tasks]))


def task_sizes(n_classes, phases, base="zero"):
    """Class count per task for the zero-base or half-base protocol.

    Half-base puts ``n_classes // 2`` classes in an extra first task and
    splits the rest evenly over ``phases`` tasks.
    """
    if phases < 1:
        raise IndivisibleClasses("need at least one phase")
    if base == "zero":
        if n_classes % phases:
            raise IndivisibleClasses(f"{n_classes} classes do not split evenly into {phases} phases")
        return [n_classes // phases] * phases
    if base == "half":
        first = n_classes // 2
        rest = n_classes - first
        if rest % phases:
            raise IndivisibleClasses(f"{rest} remaining classes do not split evenly into {phases} phases")
        return [first] + [rest // phases] * phases
    raise ValueError(f"unknown base setting {base!r}")


def split_stream(dataset, phases, base="zero", order_seed=0, test_fraction=0.2):
    """Shuffle class ids with ``order_seed``, group them into tasks and split each class 80/20."""
    rng = np.random.default_rng(order_seed)
    classes = np.array(dataset.classes)
    sizes = task_sizes(len(classes), phases, base)
    order = classes[rng.permutation(classes.size)]

    train_idx, test_idx = {}, {}
    for k in classes:  # fixed, sorted visiting order keeps the split reproducible
        idx = np.flatnonzero(dataset.y == k)
        idx = idx[rng.permutation(idx.size)]
        n_test = int(round(test_fraction * idx.size))
        test_idx[int(k)] = np.sort(idx[:n_test])
        train_idx[int(k)] = np.sort(idx[n_test:])

    tasks, start = [], 0
    for t, size in enumerate(sizes):
        cls = tuple(int(k) for k in order[start:start + size])
        start += size
        tr = np.concatenate([train_idx[k] for k in cls])
        te = np.concatenate([test_idx[k] for k in cls])
        tasks.append(Task(t, cls, dataset.subset(np.sort(tr)), dataset.subset(np.sort(te))))
    return TaskStream(tasks, dataset.dim, order_seed)


def load_csv(path, input_dim=None):
    """Read ``f0,...,f{d-1},label`` rows (header required) in file order."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyDataset(f"{path} is empty")
        header = [h.strip() for h in header]
        if not header or header[-1] != "label":
            raise ParseError("header must end with a 'label' column", line=1)
        d = len(header) - 1
        if input_dim is not None and d != input_dim:
            raise DimensionMismatch(f"{path} has {d} feature columns, expected {input_dim}")
        xs, ys = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != d + 1:
                raise ParseError(f"expected {d + 1} fields, got {len(row)}", line=lineno)
            try:
                xs.append([float(c) for c in row[:-1]])
                label = int(row[-1])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if label < 0:
                raise ParseError(f"negative label {label}", line=lineno)
            ys.append(label)
    if not ys:
        raise EmptyDataset(f"{path} has a header but no rows")
    return Dataset(np.array(xs, dtype=np.float64), np.array(ys, dtype=np.int64))


def write_csv(path, dataset):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i}" for i in range(dataset.dim)] + ["label"])
        for row, label in zip(dataset.x, dataset.y.tolist()):
            w.writerow([repr(float(v)) for v in row] + [int(label)])
