"""Flat ``dotted.key = value`` experiment configs.

Blank lines and ``#`` comments are ignored. Lists are written ``[2, 4, 6]``
(brackets optional), ``none`` clears an optional value.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .channels import standard_channel

PROTOCOL_SCENARIOS = ("keygen", "keydist", "entgen", "entdist", "enttrans")
SCENARIOS = PROTOCOL_SCENARIOS + ("rate", "typical", "code", "optimize")
CHANNEL_SCENARIOS = ("keygen", "entgen", "enttrans", "optimize")
SOURCE_SCENARIOS = ("keydist", "entdist")
CHANNEL_KINDS = ("identity", "depolarizing", "dephasing", "amplitude_damping", "erasure")
SOURCE_KINDS = ("overlap", "bell_diagonal")
INPUT_KINDS = ("max_entangled", "ensemble")
MESSAGE_KINDS = ("maximally_entangled", "basis")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    scenario: str
    channel_kind: str | None = None
    channel_p: float = 0.0
    input_kind: str = "max_entangled"
    input_probs: list | None = None
    source_kind: str | None = None
    source_probs: list | None = None
    source_b_overlap: float = 0.0
    source_e_overlap: float = 1.0
    source_weights: list | None = None
    n_list: list | None = None
    delta: float = 0.1
    epsilon: float = 0.1
    backoff: float | None = None
    trials: int = 100
    seed: int = 0
    out: str = "results.csv"
    m_bits: int | None = None
    s_bits: int | None = None
    optimize_kind: str = "pure_qubit_angles"
    optimize_budget: int = 400
    optimize_restarts: int = 8
    message_kind: str = "maximally_entangled"

    def __post_init__(self):
        if self.n_list is None:
            self.n_list = [4]
        if self.source_probs is None:
            self.source_probs = [0.5, 0.5]
        self.validate()

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario: unknown value {self.scenario!r}")
        has_channel, has_source = self.channel_kind is not None, self.source_kind is not None
        if has_channel and has_source:
            raise ConfigError("give either channel.* or source.*, not both")
        if self.scenario in CHANNEL_SCENARIOS and not has_channel:
            raise ConfigError(f"missing required field channel.kind for scenario {self.scenario}")
        if self.scenario in SOURCE_SCENARIOS and not has_source:
            raise ConfigError(f"missing required field source.kind for scenario {self.scenario}")
        if not (has_channel or has_source):
            raise ConfigError("missing required field channel.kind or source.kind")
        if has_channel:
            if self.channel_kind not in CHANNEL_KINDS:
                raise ConfigError(f"channel.kind: unknown value {self.channel_kind!r}")
            try:
                standard_channel(self.channel_kind, self.channel_p)
            except ValueError as exc:
                raise ConfigError(f"channel.p: {exc}") from None
        if has_source:
            if self.source_kind not in SOURCE_KINDS:
                raise ConfigError(f"source.kind: unknown value {self.source_kind!r}")
            if self.source_kind == "bell_diagonal" and (self.source_weights is None or len(self.source_weights) != 4):
                raise ConfigError("source.weights: bell_diagonal needs four weights")
        if self.input_kind not in INPUT_KINDS:
            raise ConfigError(f"input.kind: unknown value {self.input_kind!r}")
        if self.input_kind == "ensemble" and not self.input_probs:
            raise ConfigError("input.probs: required for an ensemble input")
        if self.message_kind not in MESSAGE_KINDS:
            raise ConfigError(f"message.kind: unknown value {self.message_kind!r}")
        if not self.n_list or any(n < 1 for n in self.n_list) or \
                any(a >= b for a, b in zip(self.n_list, self.n_list[1:])):
            raise ConfigError("n_list: must be non-empty, positive and strictly ascending")
        if self.delta <= 0:
            raise ConfigError("delta: must be positive")
        if not 0 < self.epsilon < 1:
            raise ConfigError("epsilon: must lie in (0, 1)")
        if self.trials < 1:
            raise ConfigError("trials: must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed: must be an unsigned 64-bit integer")
        if self.optimize_budget < 1 or self.optimize_restarts < 1:
            raise ConfigError("optimize.budget and optimize.restarts must be at least 1")


def _key(field_name: str) -> str:
    head, _, tail = field_name.partition("_")
    return f"{head}.{tail}" if head in ("channel", "input", "source", "optimize", "message") else field_name


FIELD_TYPES = {f.name: f.type.split(" |")[0] for f in fields(ExperimentConfig)}
KEY_TO_FIELD = {_key(name): name for name in FIELD_TYPES}
LIST_ITEM = {"input_probs": float, "source_probs": float, "source_weights": float, "n_list": int}


def _convert(key: str, name: str, raw: str):
    kind = FIELD_TYPES[name]
    optional = "None" in next(f.type for f in fields(ExperimentConfig) if f.name == name)
    if optional and raw.lower() == "none":
        return None
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "list":
            body = raw.strip()
            if body.startswith("[") and body.endswith("]"):
                body = body[1:-1]
            return [LIST_ITEM[name](v) for v in body.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected {kind}, got {raw!r}") from None
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        raw = raw[1:-1]
    return raw


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse config text; ``overrides`` (dotted key -> raw string) win over the file."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        raw[key] = value
    raw.update(overrides or {})
    values = {}
    for key, value in raw.items():
        if key not in KEY_TO_FIELD:
            raise ConfigError(f"unknown key {key!r}")
        name = KEY_TO_FIELD[key]
        values[name] = _convert(key, name, value)
    if "scenario" not in values:
        raise ConfigError("missing required field scenario")
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:  # e.g. a list where a scalar was expected
        raise ConfigError(str(exc)) from None


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, list):
        return "[" + ", ".join(repr(v) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(config: ExperimentConfig) -> str:
    """Every key with its materialized value, in schema order."""
    return "".join(f"{_key(f.name)} = {_format(getattr(config, f.name))}\n" for f in fields(ExperimentConfig))


def config_dict(config: ExperimentConfig) -> dict:
    return {_key(f.name): getattr(config, f.name) for f in fields(ExperimentConfig)}
