"""Experiment configuration: YAML grammar, validation and canonical emission.

Grammar (every key except ``protocol``, ``n_codes`` and ``seed`` is optional)::

    protocol: protocol2            # protocol1 | protocol2 | protocol3 | bb84
    n_codes: 200000
    seed: 7                        # 0 <= seed < 2**64
    z_bias: 0.5                    # probability Alice prepares in the Z basis
    basis_weights: {Z: 1, X: 1, Y: 1}   # Bob's basis weights (protocol2)
    channel:
      loss_prob: 0.0               # per photon
      real_rotation_only: false    # force phi = delta = 0
      eve: none                    # none | intercept_resend_z
      block_correlated: 1          # codes sharing one rotation draw
      rotation:
        theta: 0.5236              # bare number = fixed
        phi: {uniform: [0.0, 6.283185307179586]}
        delta: {gaussian: {mean: 0.0, sigma: 0.1}}
    error_test: {x_fraction: 0.5, z_fraction: 0.1}
    block_size: null               # enable block inversion of the raw key
    block_reveal_fraction: 0.1
    abort_if_tp_above: 0.11
    output: {path: null, format: structured}   # structured | csv
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

import yaml

from subspace_qkd.channel import (
    ChannelConfig,
    Distribution,
    EveMode,
    Fixed,
    Gaussian,
    RotationSpec,
    UniformRange,
)

PROTOCOLS = ("protocol1", "protocol2", "protocol3", "bb84")
RESERVED_PROTOCOLS = ("six_state",)
FORMATS = ("structured", "csv")


class ConfigError(ValueError):
    """Malformed or invalid configuration. ``field`` names the offending key."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field is not None:
            prefix += f"{field}: "
        super().__init__(prefix + message)


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str
    n_codes: int
    seed: int
    z_bias: float = 0.5
    basis_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    x_test_fraction: float = 0.5
    z_test_fraction: float = 0.1
    block_size: int | None = None
    block_reveal_fraction: float = 0.1
    abort_if_tp_above: float = 0.11
    output_path: str | None = None
    output_format: str = "structured"

    @property
    def bob_basis_probs(self) -> tuple[float, float, float]:
        total = sum(self.basis_weights)
        return tuple(w / total for w in self.basis_weights)

    def with_theta(self, theta: float) -> ExperimentConfig:
        rotation = replace(self.channel.rotation, theta=Fixed(float(theta)))
        return replace(self, channel=replace(self.channel, rotation=rotation))


# -- parsing -----------------------------------------------------------------

_TOP_KEYS = {
    "protocol", "n_codes", "seed", "z_bias", "basis_weights", "channel",
    "error_test", "block_size", "block_reveal_fraction", "abort_if_tp_above", "output",
}


def _check_keys(doc: dict, allowed: set[str], where: str) -> None:
    for key in doc:
        if key not in allowed:
            name = f"{where}.{key}" if where else str(key)
            raise ConfigError("unknown key", field=name)


def _mapping(value: Any, name: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"expected a mapping, got {type(value).__name__}", field=name)
    return value


def _number(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=name)
    if not math.isfinite(value):
        raise ConfigError("must be finite", field=name)
    return float(value)


def _probability(value: Any, name: str, *, open_low: bool = False) -> float:
    p = _number(value, name)
    if not 0.0 <= p <= 1.0 or (open_low and p == 0.0):
        lo = "(0" if open_low else "[0"
        raise ConfigError(f"must lie in {lo}, 1], got {p!r}", field=name)
    return p


def _integer(value: Any, name: str, lo: int, hi: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}", field=name)
    if value < lo or (hi is not None and value > hi):
        bound = f">= {lo}" if hi is None else f"in [{lo}, {hi}]"
        raise ConfigError(f"must be {bound}, got {value}", field=name)
    return value


def _bool(value: Any, name: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"expected true/false, got {value!r}", field=name)
    return value


def _distribution(value: Any, name: str) -> Distribution:
    if not isinstance(value, dict):
        return Fixed(_number(value, name))
    if len(value) != 1:
        raise ConfigError("expected exactly one of fixed/uniform/gaussian", field=name)
    (kind, params), = value.items()
    try:
        if kind == "fixed":
            return Fixed(_number(params, f"{name}.fixed"))
        if kind == "uniform":
            if not isinstance(params, (list, tuple)) or len(params) != 2:
                raise ConfigError("expected [lo, hi]", field=f"{name}.uniform")
            return UniformRange(_number(params[0], f"{name}.uniform"),
                                _number(params[1], f"{name}.uniform"))
        if kind == "gaussian":
            params = _mapping(params, f"{name}.gaussian")
            _check_keys(params, {"mean", "sigma"}, f"{name}.gaussian")
            return Gaussian(_number(params.get("mean", 0.0), f"{name}.gaussian.mean"),
                            _number(params.get("sigma", 0.0), f"{name}.gaussian.sigma"))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), field=name) from None
    raise ConfigError(f"unknown distribution kind {kind!r}", field=name)


def _channel(doc: Any) -> ChannelConfig:
    doc = _mapping(doc, "channel")
    _check_keys(doc, {"loss_prob", "real_rotation_only", "eve", "block_correlated", "rotation"},
                "channel")
    rot = _mapping(doc.get("rotation"), "channel.rotation")
    _check_keys(rot, {"theta", "phi", "delta"}, "channel.rotation")
    rotation = RotationSpec(
        **{k: _distribution(rot.get(k, 0.0), f"channel.rotation.{k}")
           for k in ("theta", "phi", "delta")}
    )
    eve = doc.get("eve", "none")
    if eve is None or eve is False:
        eve = "none"
    try:
        eve = EveMode(eve)
    except ValueError:
        choices = ", ".join(m.value for m in EveMode)
        raise ConfigError(f"unknown mode {eve!r} (choose from {choices})",
                          field="channel.eve") from None
    return ChannelConfig(
        rotation=rotation,
        loss_prob=_probability(doc.get("loss_prob", 0.0), "channel.loss_prob"),
        real_rotation_only=_bool(doc.get("real_rotation_only", False),
                                 "channel.real_rotation_only"),
        eve=eve,
        block_correlated=_integer(doc.get("block_correlated", 1), "channel.block_correlated", 1),
    )


def config_from_dict(doc: Any) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    _check_keys(doc, _TOP_KEYS, "")
    for required in ("protocol", "n_codes", "seed"):
        if required not in doc:
            raise ConfigError("missing required key", field=required)

    protocol = doc["protocol"]
    if protocol in RESERVED_PROTOCOLS:
        raise ConfigError(f"protocol {protocol!r} is not implemented", field="protocol")
    if protocol not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {protocol!r} (choose from {', '.join(PROTOCOLS)})",
                          field="protocol")

    weights_doc = _mapping(doc.get("basis_weights"), "basis_weights")
    _check_keys(weights_doc, {"Z", "X", "Y"}, "basis_weights")
    weights = []
    for b in ("Z", "X", "Y"):
        w = _number(weights_doc.get(b, 1.0), f"basis_weights.{b}")
        if w < 0:
            raise ConfigError("must be non-negative", field=f"basis_weights.{b}")
        weights.append(w)
    if sum(weights) <= 0:
        raise ConfigError("at least one weight must be positive", field="basis_weights")

    et = _mapping(doc.get("error_test"), "error_test")
    _check_keys(et, {"x_fraction", "z_fraction"}, "error_test")

    block_size = doc.get("block_size")
    if block_size is not None:
        block_size = _integer(block_size, "block_size", 1)

    out = _mapping(doc.get("output"), "output")
    _check_keys(out, {"path", "format"}, "output")
    path = out.get("path")
    if path is not None and not isinstance(path, str):
        raise ConfigError("expected a string path", field="output.path")
    fmt = out.get("format", "structured")
    if fmt not in FORMATS:
        raise ConfigError(f"must be one of {', '.join(FORMATS)}", field="output.format")

    return ExperimentConfig(
        protocol=protocol,
        n_codes=_integer(doc["n_codes"], "n_codes", 1),
        seed=_integer(doc["seed"], "seed", 0, 2**64 - 1),
        z_bias=_probability(doc.get("z_bias", 0.5), "z_bias"),
        basis_weights=tuple(weights),
        channel=_channel(doc.get("channel")),
        x_test_fraction=_probability(et.get("x_fraction", 0.5), "error_test.x_fraction"),
        z_test_fraction=_probability(et.get("z_fraction", 0.1), "error_test.z_fraction"),
        block_size=block_size,
        block_reveal_fraction=_probability(doc.get("block_reveal_fraction", 0.1),
                                           "block_reveal_fraction", open_low=True),
        abort_if_tp_above=_number(doc.get("abort_if_tp_above", 0.11), "abort_if_tp_above"),
        output_path=path,
        output_format=fmt,
    )


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a YAML config document, filling defaults."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"parse error: {problem}", line=line) from None
    return config_from_dict(doc)


# -- emission ----------------------------------------------------------------

def _emit_distribution(d: Distribution) -> Any:
    if isinstance(d, Fixed):
        return {"fixed": d.value}
    if isinstance(d, UniformRange):
        return {"uniform": [d.lo, d.hi]}
    return {"gaussian": {"mean": d.mean, "sigma": d.sigma}}


def config_to_dict(cfg: ExperimentConfig) -> dict:
    ch = cfg.channel
    return {
        "protocol": cfg.protocol,
        "n_codes": cfg.n_codes,
        "seed": cfg.seed,
        "z_bias": cfg.z_bias,
        "basis_weights": dict(zip(("Z", "X", "Y"), cfg.basis_weights)),
        "channel": {
            "loss_prob": ch.loss_prob,
            "real_rotation_only": ch.real_rotation_only,
            "eve": ch.eve.value,
            "block_correlated": ch.block_correlated,
            "rotation": {
                "theta": _emit_distribution(ch.rotation.theta),
                "phi": _emit_distribution(ch.rotation.phi),
                "delta": _emit_distribution(ch.rotation.delta),
            },
        },
        "error_test": {"x_fraction": cfg.x_test_fraction, "z_fraction": cfg.z_test_fraction},
        "block_size": cfg.block_size,
        "block_reveal_fraction": cfg.block_reveal_fraction,
        "abort_if_tp_above": cfg.abort_if_tp_above,
        "output": {"path": cfg.output_path, "format": cfg.output_format},
    }


def emit_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
