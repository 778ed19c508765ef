"""Namespaced run configuration: ``key=value`` files plus flag overrides.

Keys carry a module prefix (``sim.``, ``chain.``, ``tl.``, ``nist.``,
``nlfsr.``, ``dp.``). Unknown keys are rejected. Values are coerced to the
type of the default; ``none`` clears an optional value.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .chain import ChainConfig
from .dp import PerturbConfig
from .nist import TestParams
from .nlfsr import DEFAULT_CLI_WIDTH, DEFAULT_RESEED_INTERVAL, NlfsrSpec, default_spec
from .sim import CouplingMode, SimParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Key:
    kind: type  # int, float, bool or str
    default: Any
    optional: bool = False
    choices: tuple[str, ...] = ()


def _from_dataclass(prefix: str, obj, optional=(), choices=None) -> dict[str, Key]:
    out = {}
    values = obj.as_dict()
    for f in dataclasses.fields(obj):
        v = values[f.name]
        kind = {bool: bool, int: int, float: float}.get(type(v), str)
        if f.name in optional:
            kind = float if f.name != "template" else str
        out[f"{prefix}.{f.name}"] = Key(kind, v, f.name in optional, (choices or {}).get(f.name, ()))
    return out


SCHEMA: dict[str, Key] = {
    **_from_dataclass("sim", SimParams(), choices={"coupling_mode": tuple(m.value for m in CouplingMode)}),
    **_from_dataclass("chain", ChainConfig(), optional=("cutoff_fc", "threshold_theta")),
    # charge window defaults to the simulation step (one sample per window)
    "tl.window": Key(float, None, optional=True),
    "tl.grid_size": Key(int, 256),
    "tl.alpha": Key(float, None, optional=True),
    "tl.band_fraction": Key(float, 0.1),
    "tl.level": Key(float, -1.0),
    **_from_dataclass("nist", TestParams(), optional=("template",)),
    "nlfsr.width": Key(int, DEFAULT_CLI_WIDTH),
    "nlfsr.spec": Key(str, None, optional=True),
    "nlfsr.reseed_interval": Key(int, DEFAULT_RESEED_INTERVAL),
    "nlfsr.include_zero_state": Key(bool, False),
    "nlfsr.n_out": Key(int, 1_000_000),
    "dp.epsilon": Key(float, 1.0),
    "dp.sensitivity_delta": Key(float, 1.0),
    "dp.clip": Key(bool, True),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def coerce(key: str, value: Any) -> Any:
    try:
        spec = SCHEMA[key]
    except KeyError:
        raise ConfigError(f"unknown config key {key!r}") from None
    if value is None or (isinstance(value, str) and value.strip().lower() in ("none", "")):
        if spec.optional:
            return None
        raise ConfigError(f"{key} requires a value")
    try:
        if spec.kind is bool:
            if isinstance(value, bool):
                return value
            s = str(value).strip().lower()
            if s in _TRUE:
                return True
            if s in _FALSE:
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if spec.kind is int:
            if isinstance(value, int) and not isinstance(value, bool):
                return value
            s = str(value).strip()
            try:
                return int(s, 0)
            except ValueError:
                f = float(s)  # accept 1e6 and 2.0
                if not f.is_integer():
                    raise ValueError(f"not an integer: {value!r}") from None
                return int(f)
        if spec.kind is float:
            return float(value)
        s = str(value).strip()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{key}: {e}") from None
    if spec.choices and s not in spec.choices:
        raise ConfigError(f"{key} must be one of {', '.join(spec.choices)}")
    return s


def parse_lines(text: str, source: str = "<config>") -> dict[str, Any]:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = coerce(k, v)
    return out


def load_file(path) -> dict[str, Any]:
    """A ``key=value`` file, or a run manifest (its ``config`` block is replayed)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    if path.suffix == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
        block = doc.get("config", doc) if isinstance(doc, dict) else None
        if not isinstance(block, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return {k: coerce(k, v) for k, v in block.items()}
    return parse_lines(text, str(path))


class RunConfig:
    """Fully resolved parameters; later layers override earlier ones."""

    def __init__(self, *layers: dict[str, Any]):
        self.values = {k: spec.default for k, spec in SCHEMA.items()}
        for layer in layers:
            for k, v in layer.items():
                self.values[k] = coerce(k, v)
        self._validate()

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def as_dict(self) -> dict[str, Any]:
        return dict(sorted(self.values.items()))

    def _section(self, prefix: str) -> dict[str, Any]:
        n = len(prefix) + 1
        return {k[n:]: v for k, v in self.values.items() if k.startswith(prefix + ".")}

    def sim_params(self) -> SimParams:
        return SimParams(**self._section("sim"))

    def chain_config(self) -> ChainConfig:
        return ChainConfig(**self._section("chain"))

    def test_params(self) -> TestParams:
        return TestParams(**self._section("nist"))

    def nlfsr_spec(self) -> NlfsrSpec:
        if self["nlfsr.spec"] is not None:
            spec = NlfsrSpec.parse(self["nlfsr.spec"])
            if self["nlfsr.include_zero_state"] and not spec.include_zero_state:
                spec = dataclasses.replace(spec, include_zero_state=True)
            return spec
        return default_spec(self["nlfsr.width"], self["nlfsr.include_zero_state"])

    def perturb_config(self) -> PerturbConfig:
        return PerturbConfig(self["dp.epsilon"], self["dp.sensitivity_delta"], self["dp.clip"])

    def charge_window(self) -> float:
        w = self["tl.window"]
        return self["sim.dt"] if w is None else w

    def _validate(self) -> None:
        try:
            self.sim_params()
            self.chain_config()
            self.test_params()
            self.nlfsr_spec()
            self.perturb_config()
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None
        if self["nlfsr.reseed_interval"] < 1 or self["nlfsr.n_out"] < 0:
            raise ConfigError("nlfsr.reseed_interval must be >= 1 and nlfsr.n_out >= 0")
        if self["tl.grid_size"] < 2 or not self["tl.band_fraction"] > 0:
            raise ConfigError("tl.grid_size must be >= 2 and tl.band_fraction > 0")
