"""Class-incremental training loop for YONO, YONO+ and the baselines.

Per task: grow the classifier head, then for every epoch re-embed the task's
training data, condense one prototype per current class and store it, and run
SGD over shuffled mini-batches on the combined objective (prototype loss +
replay-augmented classifier loss + distillation). After the last epoch the
extractor is interpolated toward the previous task's snapshot, which then
becomes the next distillation teacher.
"""
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .encoder import (
    EncoderArchitecture,
    OptimizerConfig,
    backward,
    embed,
    expand_classifier,
    forward,
    init_state,
    interpolate,
    save_checkpoint,
    sgd_step,
    snapshot,
)
from .errors import ClassCollision
from .losses import (
    AnchorSet,
    ArcfaceConfig,
    LossWeights,
    classifier_loss_yono,
    classifier_loss_yono_plus,
    kd_term,
    prototype_loss,
    total_loss,
)
from .metrics import AccuracyMatrix, all_phase_accuracy, average_accuracy, average_forgetting, evaluate
from .prototypes import PrototypeMemory, condense_class
from .synthesis import Synthesizer

YONO = "yono"
YONO_PLUS = "yono+"
NAIVE = "naive"
JOINT_ORACLE = "joint"
MODES = (YONO, YONO_PLUS, NAIVE, JOINT_ORACLE)

# components that can be switched off for ablations
ABLATIONS = ("prototype-replay", "synthesis", "kd", "interpolation", "partial-freeze")


def canonical_mode(name):
    key = name.strip().lower().replace("_", "").replace("-", "")
    aliases = {"yono": YONO, "yono+": YONO_PLUS, "yonoplus": YONO_PLUS, "naive": NAIVE,
               "joint": JOINT_ORACLE, "jointoracle": JOINT_ORACLE}
    if key not in aliases:
        raise ValueError(f"unknown mode {name!r}; expected one of {', '.join(MODES)}")
    return aliases[key]


def canonical_ablation(name):
    key = name.strip().lower().replace("_", "-")
    if key.startswith("no-"):
        key = key[3:]
    if key not in ABLATIONS:
        raise ValueError(f"unknown component {name!r}; expected one of {', '.join(ABLATIONS)}")
    return key


@dataclass(frozen=True)
class TrainerConfig:
    """Training hyperparameters.

    Defaults are the desk-scale profile. The full-scale values (60 epochs,
    batch 256, eta=0.01, eta'=0.001) live in ``configs/full-scale.toml``; the
    small MLP diverges under distillation weight 30 at eta=0.01, so the desk
    profile trains at eta=0.001, eta'=0.0005. Shared with full scale:
    lambda=0.6, delta=0.25, beta=0.6, x0.1 decay every 20 epochs,
    kappa=1.96, loss weights 1/1/30.
    """

    mode: str = YONO_PLUS
    epochs: int = 40
    batch_size: int = 64
    mean_shift_iters: int = 5
    mean_shift_step: float = 0.6
    margin: float = 0.25
    temperature: float = 1.0 / 16.0
    beta: float = 0.6
    lr: float = 0.001
    lr_old: float = 0.0005
    lr_decay: float = 0.1
    lr_decay_every: int = 20
    momentum: float = 0.0
    kappa: float = 1.96
    weight_prototype: float = 1.0
    weight_classifier: float = 1.0
    weight_kd: float = 30.0
    hidden_dims: tuple = (64, 64)
    embed_dim: int = 16
    nonlinearity: str = "relu"
    seed: int = 0
    off: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "mode", canonical_mode(self.mode))
        object.__setattr__(self, "off", frozenset(canonical_ablation(a) for a in self.off))
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.epochs < 1 or self.mean_shift_iters < 1 or self.batch_size < 1:
            raise ValueError("epochs, mean-shift iterations and batch size must be >= 1")
        rates = (self.lr, self.lr_old, self.momentum, self.weight_prototype, self.weight_classifier,
                 self.weight_kd, self.temperature, self.margin, self.kappa)
        if any(r < 0 for r in rates):
            raise ValueError("rates and weights must be nonnegative")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")

    # -- resolved component switches --------------------------------------
    @property
    def incremental(self):
        return self.mode in (YONO, YONO_PLUS)

    @property
    def synthetic_replay(self):
        return (self.mode == YONO_PLUS and "synthesis" not in self.off
                and "prototype-replay" not in self.off)

    @property
    def prototype_replay(self):
        # YONO+ with synthesis switched off replays raw prototypes, i.e. YONO
        if not self.incremental or "prototype-replay" in self.off:
            return False
        return self.mode == YONO or "synthesis" in self.off

    @property
    def use_kd(self):
        return self.incremental and "kd" not in self.off and self.weight_kd > 0

    @property
    def effective_beta(self):
        return self.beta if self.incremental and "interpolation" not in self.off else 1.0

    @property
    def optimizer(self):
        partial = self.incremental and "partial-freeze" not in self.off
        return OptimizerConfig(self.lr, self.lr_old if partial else self.lr, self.lr_decay,
                               self.lr_decay_every, self.momentum)

    @property
    def arcface(self):
        return ArcfaceConfig(self.margin, self.temperature)

    @property
    def weights(self):
        return LossWeights(self.weight_prototype, self.weight_classifier, self.weight_kd)

    def architecture(self, input_dim):
        return EncoderArchitecture(input_dim, self.hidden_dims, self.embed_dim, self.nonlinearity)

    def to_dict(self):
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        d["off"] = sorted(self.off)
        return d


@dataclass
class TaskResult:
    task_id: int
    classes: tuple
    loss_trace: list
    prototypes: list
    snapshot: object = None
    checkpoint: str | None = None

    def to_dict(self):
        return {
            "task_id": self.task_id,
            "classes": list(self.classes),
            "loss_trace": self.loss_trace,
            "prototype_classes": [p.class_id for p in self.prototypes],
            "checkpoint": self.checkpoint,
        }


def _condense(state, task, cfg, rng, task_id):
    z = embed(state, task.train.x)
    return [
        condense_class(z[task.train.y == k], cfg.mean_shift_step, cfg.mean_shift_iters,
                       class_id=k, task_id=task_id, rng=rng)
        for k in task.classes
    ]


def train_task(state, task, memory, cfg, rng, teacher=None, task_id=None):
    """Train on one task; returns ``(state, memory, TaskResult)``.

    ``teacher`` is the previous task's post-interpolation snapshot (``None``
    for the first task). It is both the distillation target during training
    and the interpolation anchor afterwards. ``result.snapshot`` is the new
    teacher for the following task.
    """
    task_id = task.task_id if task_id is None else task_id
    current = [int(k) for k in task.classes]
    clash = [k for k in current if k in state.registry or k in memory]
    if clash:
        raise ClassCollision(f"classes {clash} were already learned")
    old_ids = memory.class_ids
    expand_classifier(state, current, rng)

    acfg, weights, opt = cfg.arcface, cfg.weights, cfg.optimizer
    replay_synth = cfg.synthetic_replay and bool(old_ids)
    replay_protos = cfg.prototype_replay and bool(old_ids)
    use_kd = cfg.use_kd and teacher is not None
    synthesizer = Synthesizer(memory, old_ids, cfg.kappa, source_task=task_id) if replay_synth else None
    buffers = {}

    x, y = task.train.x, task.train.y
    n = y.size
    bs = cfg.batch_size
    steps = math.ceil(n / bs)
    trace = []
    protos = []
    for epoch in range(cfg.epochs):
        protos = _condense(state, task, cfg, rng, task_id)
        memory.save(protos)
        anchors = AnchorSet.from_memory(memory)
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for s in range(steps):
            idx = perm[s * bs:(s + 1) * bs]
            xb, yb = x[idx], y[idx]
            z, cache = forward(state, xb)
            head = AnchorSet.from_classifier(state)
            parts = {"prototype": prototype_loss(z, yb, anchors, acfg)}
            if replay_synth:
                synth = synthesizer.minibatch(bs, rng)
                parts["classifier"] = classifier_loss_yono_plus(z, yb, synth, head, acfg)
            elif replay_protos:
                ids = old_ids if len(old_ids) <= bs else np.sort(rng.choice(old_ids, bs, replace=False))
                parts["classifier"] = classifier_loss_yono(z, yb, memory, head, acfg, replay_ids=ids)
            else:
                parts["classifier"] = classifier_loss_yono(z, yb, None, head, acfg)
            if use_kd:
                parts["kd"] = kd_term(z, embed(teacher, xb))
            total = total_loss(parts, weights)
            grads = backward(state, cache, total.grads["z"])
            grads.classifier = total.grads["w"]
            sgd_step(state, grads, opt, current, epoch, buffers)
            epoch_loss += total.value
        trace.append(epoch_loss / steps)

    if teacher is not None and cfg.effective_beta < 1.0:
        state = interpolate(teacher, state, cfg.effective_beta)
    result = TaskResult(task_id, tuple(current), trace, protos, snapshot(state))
    return state, memory, result


@dataclass
class RunRecord:
    mode: str
    seed: int
    config: dict
    accuracy: AccuracyMatrix
    tasks: list = field(default_factory=list)
    wall_clock: float = 0.0
    state: object = None
    memory: object = None

    @property
    def metrics(self):
        out = {
            "avg_accuracy": average_accuracy(self.accuracy),
            "all_phase_accuracy": all_phase_accuracy(self.accuracy),
            "avg_forgetting": float("nan"),
        }
        if self.accuracy.n_tasks >= 2:
            out["avg_forgetting"] = average_forgetting(self.accuracy)
        return out

    def to_dict(self):
        return {
            "mode": self.mode,
            "seed": self.seed,
            "config": self.config,
            "accuracy_matrix": self.accuracy.rows(),
            "metrics": {k: (None if math.isnan(v) else v) for k, v in self.metrics.items()},
            "tasks": [t.to_dict() for t in self.tasks],
            "n_prototypes": None if self.memory is None else len(self.memory),
            "wall_clock_seconds": self.wall_clock,
        }

    def write(self, out_dir):
        """run.json, accuracy.csv, memory.bin/.txt and model.ckpt into ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "run.json").write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        self.accuracy.to_csv(out / "accuracy.csv")
        if self.memory is not None:
            self.memory.write(out / "memory.bin")
            (out / "memory.txt").write_text(self.memory.to_text())
        if self.state is not None:
            save_checkpoint(self.state, out / "model.ckpt")
        return out


def run_stream(stream, cfg):
    """Train over ``stream`` in order and fill the accuracy matrix.

    After phase ``i`` the model is scored on the test split of every task
    ``j <= i``, predicting among all classes seen so far.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    state = init_state(cfg.architecture(stream.input_dim), rng)
    memory = PrototypeMemory(cfg.embed_dim)
    acc = AccuracyMatrix(len(stream))
    results = []

    if cfg.mode == JOINT_ORACLE:
        state, memory, res = train_task(state, stream.joint(), memory, cfg, rng)
        row = evaluate(state, [(t.test.x, t.test.y) for t in stream])
        for i in range(len(stream)):
            acc.set_row(i, row[: i + 1])
        results.append(res)
    else:
        teacher = None
        for i, task in enumerate(stream):
            state, memory, res = train_task(state, task, memory, cfg, rng, teacher)
            teacher = res.snapshot
            acc.set_row(i, evaluate(state, [(t.test.x, t.test.y) for t in stream.tasks[: i + 1]]))
            results.append(res)

    for r in results:
        r.snapshot = None  # teachers are not needed once the run is done
    return RunRecord(cfg.mode, cfg.seed, cfg.to_dict(), acc, results,
                     time.perf_counter() - t0, state, memory)
