"""Synthetic replay embeddings drawn around stored prototypes.

For a prototype ``p`` with cosine statistics ``(mu, sigma)`` a sample is built
in a canonical frame around ``u = e_1``: draw the cosine ``a`` from a
truncated normal on ``mu +- kappa*sigma``, complete ``[a, eps_2 .. eps_m]`` to
a unit vector, then rotate the frame so that ``u`` lands on ``p``. The rotation
preserves inner products, so ``<z', p> == a`` exactly up to rounding.
"""
import csv
from dataclasses import dataclass

import numpy as np

from .errors import AntipodalAxis, EmptyMemory, FormatError, UnknownClass
from .geometry import (
    TruncatedGaussianSpec,
    basis_vector,
    rotation_from_axis,
    sample_sphere_neighbors,
    sample_truncated_gaussian,
)

KAPPA = 1.96
# keeps the truncated support strictly inside (-1, 1)
_EDGE = 1e-9


@dataclass
class SyntheticBatch:
    embeddings: np.ndarray
    labels: np.ndarray
    source_task: int = -1

    def __len__(self):
        return self.labels.shape[0]

    @property
    def items(self):
        return list(zip(self.embeddings, self.labels.tolist()))

    @classmethod
    def empty(cls, dim, source_task=-1):
        return cls(np.zeros((0, dim)), np.zeros(0, dtype=np.int64), source_task)


def sampling_spec(proto, kappa=KAPPA):
    """Truncated-normal spec for a prototype, shrinking ``sigma`` to fit (-1, 1).

    Falls back to ``sigma = (1 - mu) / kappa`` when no usable measured spread
    is stored.
    """
    mu = float(np.clip(proto.cos_mean, -1.0 + _EDGE, 1.0 - _EDGE))
    sigma = proto.cos_std
    if sigma is None or not np.isfinite(sigma) or sigma <= 0:
        sigma = (1.0 - mu) / kappa
    room = min(1.0 - mu, 1.0 + mu) / kappa
    sigma = min(float(sigma), room * (1.0 - 1e-6))
    return TruncatedGaussianSpec(mu, sigma, kappa)


def _half_turn(m):
    # maps e_1 to -e_1 with det +1
    R = np.eye(m)
    R[0, 0] = R[1, 1] = -1.0
    return R


class Synthesizer:
    """Caches one rotation and one sampling spec per stored class.

    Stored prototypes are frozen within a task, so a synthesizer is built
    once per task and reused for every mini-batch.
    """

    def __init__(self, memory, class_ids=None, kappa=KAPPA, source_task=-1):
        ids = memory.class_ids if class_ids is None else sorted(class_ids)
        if not ids:
            raise EmptyMemory("no stored prototypes to synthesize from")
        for k in ids:
            if k not in memory:
                raise UnknownClass(f"class {k} has no stored prototype")
        self.dim = memory.dim
        self.kappa = kappa
        self.source_task = source_task
        self.class_ids = np.asarray(ids, dtype=np.int64)
        self.specs = {}
        self.rotations = {}
        u = basis_vector(self.dim)
        for k in ids:
            proto = memory[k]
            self.specs[k] = sampling_spec(proto, kappa)
            try:
                self.rotations[k] = rotation_from_axis(proto.direction, u)
            except AntipodalAxis:
                self.rotations[k] = _half_turn(self.dim)

    def sample_class(self, class_id, n, rng):
        a = sample_truncated_gaussian(self.specs[class_id], rng, n)
        v = sample_sphere_neighbors(a, self.dim, rng)
        return v @ self.rotations[class_id].T

    def per_class(self, per_class, rng):
        if per_class < 1:
            raise ValueError("per_class must be >= 1")
        embs = [self.sample_class(int(k), per_class, rng) for k in self.class_ids]
        labels = np.repeat(self.class_ids, per_class)
        return SyntheticBatch(np.concatenate(embs), labels, self.source_task)

    def minibatch(self, batch_size, rng):
        """Labels uniform over stored classes (with replacement)."""
        picks = rng.integers(0, self.class_ids.size, size=batch_size)
        labels = self.class_ids[picks]
        embs = np.empty((batch_size, self.dim))
        for j, k in enumerate(self.class_ids):
            idx = np.flatnonzero(picks == j)
            if idx.size:
                embs[idx] = self.sample_class(int(k), idx.size, rng)
        return SyntheticBatch(embs, labels, self.source_task)


def synthesize(memory, per_class, kappa=KAPPA, rng=None, class_ids=None):
    """``per_class`` synthetic embeddings for every (selected) stored class."""
    if len(memory) == 0:
        raise EmptyMemory("prototype memory is empty")
    rng = np.random.default_rng() if rng is None else rng
    return Synthesizer(memory, class_ids, kappa).per_class(per_class, rng)


def synthesize_minibatch(memory, batch_size, rng, kappa=KAPPA, class_ids=None):
    if len(memory) == 0:
        raise EmptyMemory("prototype memory is empty")
    return Synthesizer(memory, class_ids, kappa).minibatch(batch_size, rng)


# --------------------------------------------------------------------------
# embedding dump
# --------------------------------------------------------------------------

@dataclass
class EmbeddingDump:
    class_ids: np.ndarray
    kinds: list
    embeddings: np.ndarray


def write_embedding_csv(path, dim, groups):
    """Write ``(kind, class_ids, embeddings)`` groups as ``class_id,kind,c0..``.

    ``kind`` is ``"synthetic"`` or ``"extracted"``.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class_id", "kind"] + [f"c{i}" for i in range(dim)])
        for kind, ids, embs in groups:
            if kind not in ("synthetic", "extracted"):
                raise ValueError(f"unknown embedding kind {kind!r}")
            for k, row in zip(np.asarray(ids).tolist(), np.asarray(embs)):
                w.writerow([int(k), kind] + [repr(float(x)) for x in row])


def read_embedding_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if not header or header[:2] != ["class_id", "kind"]:
            raise FormatError(f"{path}: missing class_id,kind header")
        dim = len(header) - 2
        ids, kinds, rows = [], [], []
        for line in r:
            ids.append(int(line[0]))
            kinds.append(line[1])
            rows.append([float(x) for x in line[2:]])
    emb = np.array(rows, dtype=np.float64).reshape(-1, dim)
    return EmbeddingDump(np.array(ids, dtype=np.int64), kinds, emb)
