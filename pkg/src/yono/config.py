"""Run configuration: sectioned TOML flattened to dotted keys.

Every key has a declared type and default in :data:`SCHEMA`. Files may set
any subset; unknown keys and badly typed values are rejected with a message
naming the key. ``--set key=value`` overrides are parsed against the same
schema.
"""
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .datasets import SyntheticBlobSpec, generate_blobs, load_csv, split_stream, task_sizes
from .errors import ConfigError, YonoError
from .trainer import TrainerConfig, canonical_ablation, canonical_mode

# key -> (kind, default); kinds: int, float, str, bool, ints, strs
SCHEMA = {
    "trainer.epochs": ("int", 40),
    "trainer.batch_size": ("int", 64),
    "trainer.mean_shift_iters": ("int", 5),
    "trainer.mean_shift_step": ("float", 0.6),
    "trainer.margin": ("float", 0.25),
    "trainer.temperature": ("float", 1.0 / 16.0),
    "trainer.beta": ("float", 0.6),
    "trainer.lr": ("float", 0.001),
    "trainer.lr_old": ("float", 0.0005),
    "trainer.lr_decay": ("float", 0.1),
    "trainer.lr_decay_every": ("int", 20),
    "trainer.momentum": ("float", 0.0),
    "trainer.kappa": ("float", 1.96),
    "trainer.weight_prototype": ("float", 1.0),
    "trainer.weight_classifier": ("float", 1.0),
    "trainer.weight_kd": ("float", 30.0),
    "trainer.hidden_dims": ("ints", [64, 64]),
    "trainer.embed_dim": ("int", 16),
    "trainer.nonlinearity": ("str", "relu"),
    "trainer.off": ("strs", []),
    "data.source": ("str", "blobs"),
    "data.csv_path": ("str", ""),
    "data.n_classes": ("int", 10),
    "data.samples_per_class": ("int", 500),
    "data.input_dim": ("int", 32),
    "data.center_separation": ("float", 5.5),
    "data.within_class_std": ("float", 1.0),
    "data.seed": ("int", 0),
    "stream.phases": ("int", 5),
    "stream.base": ("str", "zero"),
    "stream.order_seed": ("int", 0),
    "stream.test_fraction": ("float", 0.2),
    "run.modes": ("strs", ["yono+"]),
    "run.seeds": ("ints", [0]),
    "run.out": ("str", "runs"),
    "run.parallel": ("int", 1),
}


def flatten(table, prefix=""):
    out = {}
    for k, v in table.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _check(key, kind, value):
    """Validate a TOML-typed value against its declared kind."""
    bad = ConfigError(f"{key}: expected {kind}, got {value!r}")
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise bad
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise bad
        return value
    if not isinstance(value, list):
        raise bad
    elem = "int" if kind == "ints" else "str"
    return [_check(key, elem, v) for v in value]


def parse_value(key, kind, text):
    """Coerce the text of a ``--set`` override to ``kind``."""
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if kind == "str":
            return text
        items = [t.strip().strip("'\"") for t in text.strip("[]").split(",") if t.strip()]
        return [int(t) for t in items] if kind == "ints" else items
    except ValueError:
        raise ConfigError(f"{key}: cannot read {text!r} as {kind}") from None


def parse_override(item):
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key=value")
    key, text = item.split("=", 1)
    key = key.strip()
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    return key, parse_value(key, SCHEMA[key][0], text)


@dataclass(frozen=True)
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def from_mapping(cls, flat, overrides=()):
        values = {k: (list(v) if isinstance(v, list) else v) for k, (_, v) in SCHEMA.items()}
        for key, value in flat.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _check(key, SCHEMA[key][0], value)
        for item in overrides:
            key, value = parse_override(item)
            values[key] = value
        cfg = cls(values)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path=None, overrides=()):
        flat = {}
        if path is not None:
            path = Path(path)
            try:
                with open(path, "rb") as fh:
                    flat = flatten(tomllib.load(fh))
            except FileNotFoundError:
                raise ConfigError(f"config file not found: {path}") from None
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return cls.from_mapping(flat, overrides)

    # -- derived objects ----------------------------------------------------
    @property
    def modes(self):
        return [canonical_mode(m) for m in self["run.modes"]]

    @property
    def seeds(self):
        return list(self["run.seeds"])

    def trainer_config(self, mode, seed, off=None):
        kw = {k.split(".", 1)[1]: v for k, v in self.values.items() if k.startswith("trainer.")}
        kw["hidden_dims"] = tuple(kw["hidden_dims"])
        kw["off"] = frozenset(kw["off"] if off is None else off)
        return TrainerConfig(mode=mode, seed=seed, **kw)

    def blob_spec(self):
        v = self.values
        return SyntheticBlobSpec(v["data.n_classes"], v["data.samples_per_class"], v["data.input_dim"],
                                 v["data.center_separation"], v["data.within_class_std"], v["data.seed"])

    def dataset(self):
        if self["data.source"] == "csv":
            return load_csv(self["data.csv_path"])
        return generate_blobs(self.blob_spec())

    def stream(self):
        return split_stream(self.dataset(), self["stream.phases"], self["stream.base"],
                            self["stream.order_seed"], self["stream.test_fraction"])

    def validate(self):
        """Raise :class:`ConfigError` naming the offending key; touches no data files."""
        v = self.values
        checks = [
            ("run.modes", lambda: [canonical_mode(m) for m in v["run.modes"]] or _fail("empty mode list")),
            ("run.seeds", lambda: v["run.seeds"] or _fail("empty seed list")),
            ("run.parallel", lambda: v["run.parallel"] >= 1 or _fail("must be >= 1")),
            ("trainer.off", lambda: [canonical_ablation(a) for a in v["trainer.off"]]),
            ("data.source", lambda: v["data.source"] in ("blobs", "csv") or _fail("must be 'blobs' or 'csv'")),
            ("data.csv_path", lambda: v["data.source"] != "csv" or v["data.csv_path"] or _fail("required for csv")),
            ("stream.base", lambda: v["stream.base"] in ("zero", "half") or _fail("must be 'zero' or 'half'")),
            ("stream.test_fraction", lambda: 0 < v["stream.test_fraction"] < 1 or _fail("must lie in (0, 1)")),
        ]
        for key, check in checks:
            try:
                check()
            except (ValueError, YonoError) as exc:
                raise ConfigError(f"{key}: {exc}") from None
        try:
            self.trainer_config(self.modes[0], self.seeds[0])
        except (ValueError, YonoError) as exc:
            raise ConfigError(f"trainer.*: {exc}") from None
        if v["data.source"] == "blobs":
            try:
                self.blob_spec()
                task_sizes(v["data.n_classes"], v["stream.phases"], v["stream.base"])
            except (ValueError, YonoError) as exc:
                raise ConfigError(f"data/stream: {exc}") from None

    def to_toml(self):
        """Render as a sectioned TOML document that :meth:`load` reads back."""
        sections = {}
        for key, value in self.values.items():
            sec, name = key.split(".", 1)
            sections.setdefault(sec, []).append(f"{name} = {_toml_value(value)}")
        return "\n".join(f"[{sec}]\n" + "\n".join(lines) + "\n" for sec, lines in sections.items())


def _fail(msg):
    raise ValueError(msg)


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return str(v)
