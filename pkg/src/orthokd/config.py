"""Experiment configuration.

A :class:`TrainConfig` is built from a flat ``key -> value`` mapping; the
table :data:`DEFAULTS` lists every key with its default.  Config files and
``--set`` overrides both use these keys (see :func:`orthokd.io.parse_config`).
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError, InvariantError, UnknownKeyError, ValueParseError
from .nets import SyntheticTask, check_activation
from .normalizer import NormalizerKind
from .projector import ProjectorSpec


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(t) for t in text.split(","))


# key: (parser, default)
DEFAULTS: dict[str, tuple] = {
    # optimisation
    "seed": (int, 0),
    "epochs": (int, 50),
    "batch_size": (int, 64),
    "lr": (float, 1e-3),
    "weight_decay": (float, 0.05),
    "momentum": (float, 0.9),
    "beta": (float, 1.0),
    "optimizer": (str, "adamw"),
    "eval_every": (int, 1),
    "record_wall_time": (_bool, False),
    # projector
    "projector": (str, "orthogonal"),
    "orth_method": (str, "expm"),
    "d_s": (int, 32),
    "d_t": (int, 128),
    "mlp_hidden": (int, 0),
    "mlp_activation": (str, "relu"),
    "ensemble_n": (int, 3),
    "svd_rank": (int, 0),
    "skew_init_std": (float, 0.1),
    # teacher normalisation
    "normalizer": (str, "standardize"),
    "whiten_method": (str, "eig"),
    "ns_iters": (int, 5),
    "eps": (float, 1e-5),
    # data
    "n_classes": (int, 10),
    "input_dim": (int, 32),
    "n_train": (int, 1024),
    "n_test": (int, 512),
    "cluster_spread": (float, 1.0),
    "data_seed": (int, -1),
    "train_features": (str, ""),
    "test_features": (str, ""),
    # networks
    "activation": (str, "relu"),
    "teacher_hidden": (_int_list, (256, 256)),
    "student_hidden": (_int_list, (64,)),
    "teacher_epochs": (int, 30),
    # sweep
    "sweep_seeds": (_int_list, ()),
}

OPTIMIZERS = ("adamw", "sgd_momentum")


def parse_value(key: str, text: str, line: int | None = None):
    parser, _ = DEFAULTS[key]
    try:
        return parser(text.strip())
    except ValueError as exc:
        raise ValueParseError(f"cannot parse {key} = {text.strip()!r}: {exc}", line) from None


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# (keys involved, check, message)
_INVARIANTS = [
    (("beta",), lambda c: c["beta"] >= 0, "beta must be >= 0"),
    (("lr",), lambda c: c["lr"] > 0, "lr must be > 0"),
    (("batch_size",), lambda c: c["batch_size"] >= 2, "batch_size must be >= 2"),
    (("epochs",), lambda c: c["epochs"] >= 0, "epochs must be >= 0"),
    (("teacher_epochs",), lambda c: c["teacher_epochs"] >= 0, "teacher_epochs must be >= 0"),
    (("eval_every",), lambda c: c["eval_every"] >= 1, "eval_every must be >= 1"),
    (("weight_decay",), lambda c: c["weight_decay"] >= 0, "weight_decay must be >= 0"),
    (("momentum",), lambda c: 0 <= c["momentum"] < 1, "momentum must lie in [0, 1)"),
    (("optimizer",), lambda c: c["optimizer"] in OPTIMIZERS, f"optimizer must be one of {OPTIMIZERS}"),
    (("eps",), lambda c: c["eps"] > 0, "eps must be > 0"),
    (("n_train", "batch_size"), lambda c: c["n_train"] >= c["batch_size"], "n_train must be >= batch_size"),
    (("d_s", "d_t", "projector"),
     lambda c: c["projector"] != "orthogonal" or c["d_s"] <= c["d_t"],
     "student wider than teacher unsupported (d_s > d_t)"),
    (("svd_rank", "batch_size", "d_t", "d_s"),
     lambda c: (c["svd_rank"] or c["d_s"]) <= min(c["batch_size"], c["d_t"]),
     "svd rank must be <= min(batch_size, d_t)"),
]


@dataclass(frozen=True)
class TrainConfig:
    """Full description of one experiment; see :data:`DEFAULTS` for keys."""

    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        values = object.__getattribute__(self, "values")
        try:
            return values[name]
        except KeyError:
            raise AttributeError(name) from None

    def __hash__(self):
        return hash(tuple(sorted((k, v) for k, v in self.values.items())))

    @property
    def projector_spec(self) -> ProjectorSpec:
        v = self.values
        return ProjectorSpec(
            kind=v["projector"], d_s=v["d_s"], d_t=v["d_t"], method=v["orth_method"],
            hidden=v["mlp_hidden"], activation=v["mlp_activation"], n=v["ensemble_n"],
            rank=v["svd_rank"], init_std=v["skew_init_std"],
        )

    @property
    def normalizer_kind(self) -> NormalizerKind:
        v = self.values
        return NormalizerKind(v["normalizer"], v["eps"], v["whiten_method"], v["ns_iters"])

    @property
    def task(self) -> SyntheticTask:
        v = self.values
        return SyntheticTask(
            n_classes=v["n_classes"], input_dim=v["input_dim"], n_train=v["n_train"],
            n_test=v["n_test"], seed=v["seed"] if v["data_seed"] < 0 else v["data_seed"],
            cluster_spread=v["cluster_spread"],
        )

    @property
    def teacher_dims(self) -> list[int]:
        v = self.values
        return [v["input_dim"], *v["teacher_hidden"], v["d_t"], v["n_classes"]]

    @property
    def student_dims(self) -> list[int]:
        v = self.values
        return [v["input_dim"], *v["student_hidden"], v["d_s"], v["n_classes"]]

    @property
    def seeds(self) -> tuple[int, ...]:
        return self.values["sweep_seeds"] or (self.values["seed"],)

    def replace(self, **changes) -> TrainConfig:
        return make_config({**self.values, **changes})

    def to_text(self) -> str:
        return "".join(f"{k} = {format_value(v)}\n" for k, v in self.values.items())


def make_config(values: dict | None = None, lines: dict | None = None) -> TrainConfig:
    """Validate a (partial) flat mapping and fill in defaults.

    ``lines`` maps keys to the config-file line that set them, for error
    messages.
    """
    values = dict(values or {})
    lines = lines or {}
    full = {}
    for key, (_, default) in DEFAULTS.items():
        full[key] = values.pop(key, default)
    if values:
        key = next(iter(values))
        raise UnknownKeyError(f"unknown key {key!r}", lines.get(key))
    for keys, check, message in _INVARIANTS:
        if not check(full):
            found = [lines[k] for k in keys if k in lines]
            raise InvariantError(message, max(found) if found else None)
    cfg = TrainConfig(full)
    # the nested specs validate their own enums
    for prop, keys in (
        ("projector_spec", ("projector", "orth_method", "mlp_activation", "ensemble_n")),
        ("normalizer_kind", ("normalizer", "whiten_method", "ns_iters")),
    ):
        try:
            getattr(cfg, prop)
        except (ConfigError, ValueError) as exc:
            found = [lines[k] for k in keys if k in lines]
            raise InvariantError(str(exc), max(found) if found else None) from None
    try:
        check_activation(full["activation"])
    except ValueError as exc:
        raise InvariantError(str(exc), lines.get("activation")) from None
    return cfg
