"""Accuracy bookkeeping for class-incremental runs.

``A[i][j]`` is the accuracy on task ``j``'s test split after training phase
``i`` (0-based here), defined for ``j <= i``. Means are computed exactly
over rationals and rounded once, so the result does not depend on summation
order.
"""
import csv
import math
from fractions import Fraction

import numpy as np

from .encoder import predict
from .errors import IncompleteMatrix, MissingTestSet, TooFewTasks


class AccuracyMatrix:
    """Lower-triangular table of per-phase, per-task accuracies."""

    def __init__(self, n_tasks):
        self.n_tasks = int(n_tasks)
        self.values = np.full((self.n_tasks, self.n_tasks), np.nan)

    def set_row(self, phase, row):
        row = list(row)
        if len(row) != phase + 1:
            raise IncompleteMatrix(f"phase {phase} needs {phase + 1} accuracies, got {len(row)}")
        for acc in row:
            if not 0.0 <= acc <= 1.0:
                raise ValueError(f"accuracy {acc} outside [0, 1]")
        self.values[phase, : phase + 1] = row

    def rows(self):
        """Ragged list form, ``rows()[i]`` has ``i + 1`` entries."""
        return [self.values[i, : i + 1].tolist() for i in range(self.n_tasks)]

    @property
    def complete(self):
        return not np.isnan(self.values[np.tril_indices(self.n_tasks)]).any()

    @classmethod
    def from_rows(cls, rows):
        out = cls(len(rows))
        for i, r in enumerate(rows):
            out.set_row(i, r)
        return out

    def to_csv(self, path):
        """``phase,task_1..task_T``; cells above the diagonal are empty."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["phase"] + [f"task_{j + 1}" for j in range(self.n_tasks)])
            for i in range(self.n_tasks):
                w.writerow([i + 1] + [_fmt(self.values[i, j]) if j <= i else "" for j in range(self.n_tasks)])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            lines = list(csv.reader(fh))
        out = cls(len(lines) - 1)
        for i, line in enumerate(lines[1:]):
            out.set_row(i, [float(x) for x in line[1 : i + 2]])
        return out


def _fmt(x):
    return repr(float(x))


def _rows(A):
    rows = A.rows() if isinstance(A, AccuracyMatrix) else [list(r) for r in A]
    for i, r in enumerate(rows):
        if len(r) < i + 1 or any(x is None or (isinstance(x, float) and math.isnan(x)) for x in r[: i + 1]):
            raise IncompleteMatrix(f"row {i} is missing entries")
    return [r[: i + 1] for i, r in enumerate(rows)]


def evaluate(state, test_sets):
    """Accuracy on each ``(x, y)`` test set, predicting over every seen class."""
    row = []
    for j, (x, y) in enumerate(test_sets):
        y = np.asarray(y)
        if y.size == 0:
            raise MissingTestSet(f"test set {j} is empty")
        row.append(float(np.mean(predict(state, x) == y)))
    return row


def _exact_mean(values):
    return float(sum(map(Fraction, values)) / len(values))


def average_accuracy(A):
    """Mean of the final row."""
    rows = _rows(A)
    if not rows:
        raise IncompleteMatrix("empty accuracy matrix")
    return _exact_mean(rows[-1])


def average_forgetting(A):
    """Mean over earlier tasks of best-seen accuracy minus final accuracy."""
    rows = _rows(A)
    T = len(rows)
    if T < 2:
        raise TooFewTasks("forgetting needs at least two phases")
    drops = [Fraction(max(rows[i][j] for i in range(j, T - 1))) - Fraction(rows[T - 1][j]) for j in range(T - 1)]
    return float(sum(drops) / len(drops))


def all_phase_accuracy(A):
    """Mean over phases of each phase's average accuracy."""
    rows = _rows(A)
    return float(sum(sum(map(Fraction, r)) / len(r) for r in rows) / len(rows))


SUMMARY_FIELDS = ("mode", "seed", "ablation", "avg_accuracy", "avg_forgetting", "all_phase_accuracy")


def write_summary_csv(path, records):
    """One row per run; ``records`` are dicts with :data:`SUMMARY_FIELDS`."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, extrasaction="ignore")
        w.writeheader()
        for r in records:
            w.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in r.items()})


def read_summary_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["seed"] = int(r["seed"])
        for k in ("avg_accuracy", "avg_forgetting", "all_phase_accuracy"):
            r[k] = float(r[k]) if r[k] not in ("", "nan") else float("nan")
    return rows


def write_accuracy_table(path, runs):
    """Stack several runs' matrices: ``mode,seed,phase,task_1..task_T``.

    ``runs`` is a sequence of ``(mode, seed, AccuracyMatrix)``; all matrices
    must have the same number of tasks.
    """
    runs = list(runs)
    T = runs[0][2].n_tasks if runs else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "seed", "phase"] + [f"task_{j + 1}" for j in range(T)])
        for mode, seed, A in runs:
            if A.n_tasks != T:
                raise IncompleteMatrix("runs in one table must share the task count")
            for i in range(T):
                w.writerow([mode, seed, i + 1] + [_fmt(A.values[i, j]) if j <= i else "" for j in range(T)])


def read_accuracy_table(path):
    """Inverse of :func:`write_accuracy_table`: ``[(mode, seed, AccuracyMatrix)]`` in file order."""
    with open(path, newline="") as fh:
        lines = list(csv.reader(fh))
    T = len(lines[0]) - 3
    grouped = {}
    for line in lines[1:]:
        key = (line[0], int(line[1]))
        i = int(line[2]) - 1
        grouped.setdefault(key, AccuracyMatrix(T)).set_row(i, [float(x) for x in line[3 : 3 + i + 1]])
    return [(mode, seed, A) for (mode, seed), A in grouped.items()]
