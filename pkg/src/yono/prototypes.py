"""Attentional mean-shift prototypes and the per-class prototype memory."""
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DimensionMismatch, EmptyClass, FormatError, ZeroVector
from .geometry import NORM_EPS, normalize, normalize_rows

DEFAULT_STEP = 0.6
STD_FLOOR = 1e-4
FULL_BATCH_LIMIT = 1024
MINIBATCH_SIZE = 256


@dataclass
class Prototype:
    class_id: int
    direction: np.ndarray
    cos_mean: float
    cos_std: float
    n_samples: int
    task_id: int = 0

    def __eq__(self, other):
        if not isinstance(other, Prototype):
            return NotImplemented
        return (
            self.class_id == other.class_id
            and self.task_id == other.task_id
            and self.n_samples == other.n_samples
            and self.cos_mean == other.cos_mean
            and self.cos_std == other.cos_std
            and np.array_equal(self.direction, other.direction)
        )


def _as_matrix(embeddings):
    z = np.asarray(embeddings, dtype=np.float64)
    if z.ndim == 1:
        z = z[None, :]
    if z.shape[0] == 0:
        raise EmptyClass("class has no samples")
    return z


def attention_weights(embeddings, p):
    """Softmax over the cosines between each embedding and ``p``."""
    unit = normalize_rows(_as_matrix(embeddings))
    logits = unit @ normalize(p)
    logits -= logits.max()
    a = np.exp(logits)
    return a / a.sum()


def mean_shift_step(p, embeddings, lam=DEFAULT_STEP):
    """One convex step of ``p`` toward the attention-weighted sample mean."""
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"step size must lie in (0, 1], got {lam}")
    unit = normalize_rows(_as_matrix(embeddings))
    p = normalize(p)
    return normalize((1.0 - lam) * p + lam * (attention_weights(unit, p) @ unit))


def _shift(unit, p, lam, iters):
    out = kernels.mean_shift_iterate(unit, p, lam, iters)
    if not np.any(out):
        raise ZeroVector("mean-shift step collapsed to the origin")
    return out


def condense_class(
    embeddings,
    lam=DEFAULT_STEP,
    iterations=5,
    init=None,
    *,
    class_id=0,
    task_id=0,
    rng=None,
    full_batch_limit=FULL_BATCH_LIMIT,
    batch_size=MINIBATCH_SIZE,
):
    """Condense one class's embeddings into a :class:`Prototype`.

    The prototype starts at ``init`` (default: normalized mean of the unit
    embeddings) and takes ``iterations`` mean-shift passes. Classes larger than
    ``full_batch_limit`` are processed as shuffled mini-batches of
    ``batch_size``, one step per mini-batch, so each pass still visits every
    sample once. ``rng`` drives the shuffle and is required in that regime.
    Zero embeddings carry no direction and are left out.
    """
    if iterations < 1:
        raise ValueError("need at least one mean-shift iteration")
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"step size must lie in (0, 1], got {lam}")
    z = _as_matrix(embeddings)
    z = z[np.linalg.norm(z, axis=1) > NORM_EPS]
    if z.shape[0] == 0:
        raise EmptyClass(f"class {class_id} has no nonzero embeddings")
    unit = normalize_rows(z)
    n = unit.shape[0]
    p = normalize(unit.mean(axis=0)) if init is None else normalize(init)

    if n <= full_batch_limit:
        p = _shift(unit, p, lam, iterations)
    else:
        if rng is None:
            raise ValueError("mini-batch condensation needs an rng")
        for _ in range(iterations):
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                p = _shift(unit[order[start:start + batch_size]], p, lam, 1)

    cos = np.clip(unit @ p, -1.0, 1.0)
    return Prototype(
        class_id=int(class_id),
        direction=p,
        cos_mean=float(cos.mean()),
        cos_std=max(float(cos.std()), STD_FLOOR),
        n_samples=n,
        task_id=int(task_id),
    )


# --------------------------------------------------------------------------
# memory
# --------------------------------------------------------------------------

_MAGIC = b"YONOPMEM"
_VERSION = 1
_HEADER = struct.Struct("<8sIIQ")  # magic, version, m, count
_RECORD_HEAD = struct.Struct("<iiqdd")  # class_id, task_id, n_samples, mu, sigma


@dataclass
class PrototypeMemory:
    """One prototype per seen class, keyed by class id."""

    dim: int
    entries: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, class_id):
        return class_id in self.entries

    def __getitem__(self, class_id):
        return self.entries[class_id]

    def __iter__(self):
        return iter(self.class_ids)

    @property
    def class_ids(self):
        return sorted(self.entries)

    def save(self, protos):
        """Insert or overwrite prototypes; other entries are left alone."""
        protos = list(protos)
        for proto in protos:
            if proto.direction.shape != (self.dim,):
                raise DimensionMismatch(
                    f"prototype for class {proto.class_id} has shape "
                    f"{proto.direction.shape}, memory dimension is {self.dim}"
                )
        for proto in protos:
            self.entries[int(proto.class_id)] = proto
        return self

    def directions(self, class_ids=None):
        ids = self.class_ids if class_ids is None else list(class_ids)
        if not ids:
            return np.zeros((0, self.dim))
        return np.stack([self.entries[k].direction for k in ids])

    def copy(self):
        return PrototypeMemory(self.dim, {k: _copy_proto(v) for k, v in self.entries.items()})

    def __eq__(self, other):
        if not isinstance(other, PrototypeMemory):
            return NotImplemented
        return self.dim == other.dim and self.entries == other.entries

    # -- binary ------------------------------------------------------------
    def to_bytes(self):
        chunks = [_HEADER.pack(_MAGIC, _VERSION, self.dim, len(self))]
        for k in self.class_ids:
            pr = self.entries[k]
            chunks.append(_RECORD_HEAD.pack(pr.class_id, pr.task_id, pr.n_samples, pr.cos_mean, pr.cos_std))
            chunks.append(np.ascontiguousarray(pr.direction, dtype="<f8").tobytes())
        return b"".join(chunks)

    @classmethod
    def from_bytes(cls, data):
        if len(data) < _HEADER.size:
            raise FormatError("truncated prototype memory header")
        magic, version, dim, count = _HEADER.unpack_from(data, 0)
        if magic != _MAGIC:
            raise FormatError("not a prototype memory file (bad magic)")
        if version != _VERSION:
            raise FormatError(f"unsupported prototype memory version {version}")
        rec = _RECORD_HEAD.size + 8 * dim
        if len(data) != _HEADER.size + count * rec:
            raise FormatError(f"expected {count} records of {rec} bytes, file size disagrees")
        mem = cls(dim)
        offset = _HEADER.size
        for _ in range(count):
            cid, tid, n, mu, sigma = _RECORD_HEAD.unpack_from(data, offset)
            offset += _RECORD_HEAD.size
            direction = np.frombuffer(data, dtype="<f8", count=dim, offset=offset).astype(np.float64)
            offset += 8 * dim
            mem.entries[cid] = Prototype(cid, direction, mu, sigma, n, tid)
        return mem

    def write(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def read(cls, path):
        return cls.from_bytes(Path(path).read_bytes())

    # -- text --------------------------------------------------------------
    def to_text(self):
        """One record per line: ``class_id task_id n_samples mu sigma d0 ... d{m-1}``."""
        lines = [f"# yono prototype memory v{_VERSION} dim={self.dim} count={len(self)}"]
        for k in self.class_ids:
            pr = self.entries[k]
            nums = [pr.cos_mean, pr.cos_std, *pr.direction.tolist()]
            lines.append(" ".join([str(pr.class_id), str(pr.task_id), str(pr.n_samples)] + [f"{x:.17g}" for x in nums]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# yono prototype memory"):
            raise FormatError("missing prototype memory text header")
        try:
            meta = dict(tok.split("=") for tok in lines[0].split() if "=" in tok)
            dim = int(meta["dim"])
        except (KeyError, ValueError) as exc:
            raise FormatError(f"bad header: {lines[0]!r}") from exc
        mem = cls(dim)
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 5 + dim:
                raise FormatError(f"line {lineno}: expected {5 + dim} fields, got {len(parts)}")
            cid, tid, n = (int(x) for x in parts[:3])
            mu, sigma = float(parts[3]), float(parts[4])
            mem.entries[cid] = Prototype(cid, np.array([float(x) for x in parts[5:]]), mu, sigma, n, tid)
        return mem


def _copy_proto(p):
    return Prototype(p.class_id, p.direction.copy(), p.cos_mean, p.cos_std, p.n_samples, p.task_id)


def save_prototypes(memory, protos):
    return memory.save(protos)
