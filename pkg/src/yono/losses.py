"""Training objectives with analytic gradients.

All classification terms share one primitive: the additive-angular-margin
softmax over cosine logits (``arcface``). Inputs and anchor rows are used
unnormalized; the cosine does the normalizing, so every loss is invariant to
positive rescaling of either side.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .encoder import backward, forward
from .errors import ArchitectureMismatch, UnknownClass, ZeroVector
from .geometry import NORM_EPS


@dataclass(frozen=True)
class ArcfaceConfig:
    margin: float = 0.25
    temperature: float = 1.0 / 16.0

    def __post_init__(self):
        if not 0.0 <= self.margin < np.pi / 2:
            raise ValueError(f"margin must lie in [0, pi/2), got {self.margin}")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class LossWeights:
    prototype: float = 1.0
    classifier: float = 1.0
    kd: float = 30.0


@dataclass
class LossValue:
    value: float
    grads: dict = field(default_factory=dict)

    def scaled(self, w):
        return LossValue(w * self.value, {k: w * g for k, g in self.grads.items()})


class AnchorSet:
    """Class-labelled rows: stored prototypes or classifier weights."""

    def __init__(self, class_ids, rows):
        self.class_ids = [int(k) for k in class_ids]
        self.rows = np.asarray(rows, dtype=np.float64).reshape(len(self.class_ids), -1)
        self._index = {k: i for i, k in enumerate(self.class_ids)}
        if len(self._index) != len(self.class_ids):
            raise ValueError("duplicate class id in anchor set")

    def __len__(self):
        return len(self.class_ids)

    def index_of(self, labels):
        try:
            return np.array([self._index[int(k)] for k in np.atleast_1d(labels)], dtype=np.int64)
        except KeyError as exc:
            raise UnknownClass(f"class {exc.args[0]} has no anchor") from None

    @classmethod
    def from_memory(cls, memory, class_ids=None):
        ids = memory.class_ids if class_ids is None else list(class_ids)
        return cls(ids, memory.directions(ids))

    @classmethod
    def from_classifier(cls, state):
        """Anchors view onto ``state.classifier`` in registry order (no copy)."""
        ids = state.class_ids
        out = cls.__new__(cls)
        out.class_ids = ids
        out._index = {k: state.registry[k] for k in ids}
        out.rows = state.classifier
        return out


def _unit_rows(x, what):
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if x.size and not np.all(norms > NORM_EPS):
        raise ZeroVector(f"zero-norm {what}")
    return x / norms, norms


def arcface_batch(z, anchors, target, cfg, need_anchor_grad=True):
    """Mean margin-softmax loss over rows of ``z``.

    ``target`` holds row indices into ``anchors``. Zero rows of ``z`` are
    skipped. Returns
    ``(value, dL/dz, dL/danchors)``; the anchor gradient is ``None`` when not
    requested.
    """
    z = np.asarray(z, dtype=np.float64)
    target = np.asarray(target, dtype=np.int64)
    gz = np.zeros_like(z)
    # a zero embedding has no angle to any class; it is left out of the mean
    keep = np.linalg.norm(z, axis=1) > NORM_EPS if z.shape[0] else np.zeros(0, dtype=bool)
    n = int(keep.sum())
    if n == 0:
        return 0.0, gz, (np.zeros_like(anchors) if need_anchor_grad else None)
    zu, zn = _unit_rows(z[keep], "embedding")
    wu, wn = _unit_rows(anchors, "anchor row")
    cos = np.clip(zu @ wu.T, -1.0, 1.0)
    loss, g = kernels.arcface_rows(cos, np.ascontiguousarray(target[keep]), cfg.margin, cfg.temperature)
    g /= n
    # d cos_ij / d z_i = (wu_j - cos_ij zu_i) / |z_i|
    gzu = g @ wu
    gz[keep] = (gzu - np.sum(gzu * zu, axis=1, keepdims=True) * zu) / zn
    gw = None
    if need_anchor_grad:
        gwu = g.T @ zu
        gw = (gwu - np.sum(gwu * wu, axis=1, keepdims=True) * wu) / wn
    return float(loss.mean()), gz, gw


def arcface(z, anchors, k, cfg=ArcfaceConfig()):
    """Single-sample margin softmax loss of ``z`` against class ``k``."""
    z = np.asarray(z, dtype=np.float64)[None, :]
    value, gz, gw = arcface_batch(z, anchors.rows, anchors.index_of([k]), cfg)
    return LossValue(value, {"z": gz[0], "anchors": gw})


def prototype_loss(z, labels, anchors, cfg=ArcfaceConfig()):
    """Pull embeddings toward their class prototype; prototypes are constants."""
    value, gz, _ = arcface_batch(z, anchors.rows, anchors.index_of(labels), cfg, need_anchor_grad=False)
    return LossValue(value, {"z": gz})


def _current_and_replay(z, labels, replay_z, replay_labels, classifier, cfg):
    value, gz, gw = arcface_batch(z, classifier.rows, classifier.index_of(labels), cfg)
    if replay_z is not None and len(replay_z):
        rv, _, rgw = arcface_batch(replay_z, classifier.rows, classifier.index_of(replay_labels), cfg)
        value += rv
        gw = gw + rgw
    return LossValue(value, {"z": gz, "w": gw})


def classifier_loss_yono(z, labels, memory, classifier, cfg=ArcfaceConfig(), replay_ids=None):
    """Current-batch loss plus the mean loss of replayed stored prototypes.

    ``replay_ids`` restricts the replay term to a subset of stored classes
    (a prototype mini-batch); by default every stored prototype is replayed.
    The replayed prototypes are constants, so the replay term only feeds the
    classifier gradient.
    """
    if memory is None or len(memory) == 0:
        return _current_and_replay(z, labels, None, None, classifier, cfg)
    ids = memory.class_ids if replay_ids is None else list(replay_ids)
    return _current_and_replay(z, labels, memory.directions(ids), ids, classifier, cfg)


def classifier_loss_yono_plus(z, labels, synthetic, classifier, cfg=ArcfaceConfig()):
    """Current-batch loss plus the mean loss over synthetic replay items."""
    if synthetic is None:
        return _current_and_replay(z, labels, None, None, classifier, cfg)
    return _current_and_replay(z, labels, synthetic.embeddings, synthetic.labels, classifier, cfg)


def kd_term(z, z_teacher):
    """Mean squared distance between student and (constant) teacher embeddings."""
    diff = np.asarray(z, dtype=np.float64) - z_teacher
    n = diff.shape[0]
    if n == 0:
        return LossValue(0.0, {"z": np.zeros_like(diff)})
    return LossValue(float(np.sum(diff * diff) / n), {"z": 2.0 * diff / n})


def kd_loss(x, state, teacher):
    """Distillation toward ``teacher``; gradients to ``state``'s theta only."""
    if state.arch != teacher.arch:
        raise ArchitectureMismatch("student and teacher architectures differ")
    z, cache = forward(state, x)
    z_t, _ = forward(teacher, x)
    term = kd_term(z, z_t)
    term.grads["theta"] = backward(state, cache, term.grads["z"]).theta
    return term


def total_loss(parts, weights=LossWeights()):
    """Weighted sum of named component losses.

    ``parts`` maps ``"prototype"``, ``"classifier"`` and ``"kd"`` to
    :class:`LossValue`; missing parts (e.g. KD on the first task) are skipped.
    Gradients with matching keys are summed.
    """
    scale = {"prototype": weights.prototype, "classifier": weights.classifier, "kd": weights.kd}
    value = 0.0
    grads = {}
    for name, part in parts.items():
        if part is None:
            continue
        w = scale[name]
        value += w * part.value
        for key, g in part.grads.items():
            if isinstance(g, list):
                cur = grads.get(key)
                grads[key] = [w * a for a in g] if cur is None else [c + w * a for c, a in zip(cur, g)]
            else:
                grads[key] = w * g if key not in grads else grads[key] + w * g
    return LossValue(value, grads)
