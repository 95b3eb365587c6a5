"""Experiment configuration: a flat key-value file with dotted prefixes.

Format: one ``key = value`` pair per line; blank lines and lines starting
with ``#`` are ignored.  Unknown keys are rejected with the offending
line number, as are type and range errors.  ``serialize`` emits every
resolved value back in canonical order, so parse -> serialize -> parse
is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .delta import ShrinkageConfig
from .errors import ConfigError
from .federation import RoundConfig
from .optim import KINDS as OPTIMIZER_KINDS
from .optim import OptimizerConfig

TASKS = ("toy2d", "synthetic_lsq", "synthetic_logistic")

_MODES = ("auto", "sgd", "exact_solve", "iasg", "exact_samples", "exact_delta")


@dataclass
class FieldSpec:
    attr: str
    cast: type
    required: bool = False
    choices: tuple | None = None
    minimum: float | None = None
    optional: bool = False  # value may be absent -> None


# Key order here is the canonical serialization order.
SCHEMA: dict[str, FieldSpec] = {
    "task": FieldSpec("task", str, required=True, choices=TASKS),
    "rounds": FieldSpec("rounds", int, required=True, minimum=0),
    "master_seed": FieldSpec("master_seed", int, minimum=0),
    "output_dir": FieldSpec("output_dir", str),
    "init_scale": FieldSpec("init_scale", float),
    "data.num_clients": FieldSpec("num_clients", int, minimum=1),
    "data.n_per_client": FieldSpec("n_per_client", int, minimum=1),
    "data.d": FieldSpec("d", int, minimum=1),
    "data.num_classes": FieldSpec("num_classes", int, minimum=2),
    "data.heterogeneity": FieldSpec("heterogeneity", float, minimum=0.0),
    "data.noise_std": FieldSpec("noise_std", float, minimum=0.0),
    "data.class_sep": FieldSpec("class_sep", float, minimum=0.0),
    "round.cohort_size": FieldSpec("cohort_size", int, minimum=1),
    "round.client_update": FieldSpec("client_update", str, choices=("fedavg", "fedpa")),
    "round.client_mode": FieldSpec("client_mode", str, choices=_MODES),
    "round.client_steps": FieldSpec("client_steps", int, minimum=1, optional=True),
    "round.client_epochs": FieldSpec("client_epochs", int, minimum=1, optional=True),
    "round.batch_size": FieldSpec("batch_size", int, minimum=1),
    "round.burn_in_rounds": FieldSpec("burn_in_rounds", int, minimum=0),
    "sampler.burn_in_steps": FieldSpec("sampler_burn_in", int, minimum=0),
    "sampler.steps_per_sample": FieldSpec("steps_per_sample", int, minimum=1, optional=True),
    "sampler.num_samples": FieldSpec("num_samples", int, minimum=1, optional=True),
    "shrinkage.rho": FieldSpec("rho", float, minimum=0.0),
    "shrinkage.epsilon_denom": FieldSpec("epsilon_denom", float),
    "client_opt.kind": FieldSpec("client_opt_kind", str, choices=OPTIMIZER_KINDS),
    "client_opt.lr": FieldSpec("client_opt_lr", float),
    "client_opt.momentum": FieldSpec("client_opt_momentum", float),
    "client_opt.beta1": FieldSpec("client_opt_beta1", float),
    "client_opt.beta2": FieldSpec("client_opt_beta2", float),
    "client_opt.tau": FieldSpec("client_opt_tau", float),
    "server_opt.kind": FieldSpec("server_opt_kind", str, choices=OPTIMIZER_KINDS),
    "server_opt.lr": FieldSpec("server_opt_lr", float),
    "server_opt.momentum": FieldSpec("server_opt_momentum", float),
    "server_opt.beta1": FieldSpec("server_opt_beta1", float),
    "server_opt.beta2": FieldSpec("server_opt_beta2", float),
    "server_opt.tau": FieldSpec("server_opt_tau", float),
}


@dataclass
class ExperimentConfig:
    task: str = "toy2d"
    rounds: int = 0
    master_seed: int = 0
    output_dir: str = "out"
    init_scale: float = 1.0
    num_clients: int = 50
    n_per_client: int = 50
    d: int = 10
    num_classes: int = 5
    heterogeneity: float = 1.0
    noise_std: float = 1.0
    class_sep: float = 2.0
    cohort_size: int = 10
    client_update: str = "fedavg"
    client_mode: str = "auto"
    client_steps: int | None = None
    client_epochs: int | None = None
    batch_size: int = 10
    burn_in_rounds: int = 0
    sampler_burn_in: int = 0
    steps_per_sample: int | None = None
    num_samples: int | None = None
    rho: float = 0.01
    epsilon_denom: float = 1e-12
    client_opt_kind: str = "sgd"
    client_opt_lr: float = 0.1
    client_opt_momentum: float = 0.0
    client_opt_beta1: float = 0.9
    client_opt_beta2: float = 0.99
    client_opt_tau: float = 1e-3
    server_opt_kind: str = "sgd"
    server_opt_lr: float = 1.0
    server_opt_momentum: float = 0.0
    server_opt_beta1: float = 0.9
    server_opt_beta2: float = 0.99
    server_opt_tau: float = 1e-3

    def _opt(self, prefix: str) -> OptimizerConfig:
        get = lambda name: getattr(self, f"{prefix}_{name}")  # noqa: E731
        return OptimizerConfig(kind=get("kind"), lr=get("lr"),
                               momentum=get("momentum"), beta1=get("beta1"),
                               beta2=get("beta2"), tau=get("tau"))

    def round_config(self) -> RoundConfig:
        try:
            return RoundConfig(
                cohort_size=self.cohort_size,
                client_update=self.client_update,
                client_mode=self.client_mode,
                client_steps=self.client_steps,
                client_epochs=self.client_epochs,
                batch_size=self.batch_size,
                burn_in_rounds=self.burn_in_rounds,
                num_samples=self.num_samples,
                steps_per_sample=self.steps_per_sample,
                sampler_burn_in=self.sampler_burn_in,
                shrinkage=ShrinkageConfig(rho=self.rho, epsilon_denom=self.epsilon_denom),
                client_opt=self._opt("client_opt"),
                server_opt=self._opt("server_opt"),
                seed=self.master_seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def parse_flat(text: str, schema: dict[str, FieldSpec]) -> dict[str, Any]:
    """Parse flat key-value text against a schema; values keyed by attr."""
    values: dict[str, Any] = {}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in schema:
            raise ConfigError(f"unknown key {key!r}", line=lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r}", line=lineno)
        seen.add(key)
        spec = schema[key]
        try:
            if spec.cast is int:
                parsed: Any = int(value)
            elif spec.cast is float:
                parsed = float(value)
            else:
                parsed = value
        except ValueError:
            raise ConfigError(
                f"cannot parse {value!r} as {spec.cast.__name__} for {key!r}",
                line=lineno) from None
        if spec.choices is not None and parsed not in spec.choices:
            raise ConfigError(
                f"{key!r} must be one of {', '.join(map(str, spec.choices))}",
                line=lineno)
        if spec.minimum is not None and parsed < spec.minimum:
            raise ConfigError(f"{key!r} must be >= {spec.minimum}", line=lineno)
        values[spec.attr] = parsed
    for key, spec in schema.items():
        if spec.required and spec.attr not in values:
            raise ConfigError(f"missing required key {key!r}")
    return values


def parse_config(text: str) -> ExperimentConfig:
    values = parse_flat(text, SCHEMA)
    cfg = ExperimentConfig(**values)
    cfg.round_config()  # validate the composed round settings eagerly
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key, spec in SCHEMA.items():
        value = getattr(cfg, spec.attr)
        if value is None:
            continue
        if isinstance(value, float):
            lines.append(f"{key} = {value!r}")
        else:
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
