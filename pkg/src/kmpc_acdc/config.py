"""Flat ``key = value`` run configuration."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .params import ConverterParams


class ConfigError(ValueError):
    """Unknown key or unparsable value; the CLI maps this to exit code 2."""


@dataclass
class RunConfig:
    # plant
    L: float = 1e-3
    C: float = 4560e-6
    G: float = 0.01
    P: float = 25.0
    r: float = 0.08
    E: float = 28.0 * math.sqrt(2.0)
    f_grid: float = 50.0
    V_d: float = 48.0
    f_sw: float = 20e3
    i_limit: float = 4.0
    v_min: float = 5.0
    dt_sample: float = 200e-6
    mode: str = "averaged"
    h_sim: float = 0.0
    noise_std: float = 0.0
    # identification
    seed: int = 1
    K: int = 400
    amplitude: float = 0.1
    ridge: float = 1e-8
    affine: bool = True
    test_seed: int = 2
    test_periods: int = 4
    predict_steps: int = 3
    # closed loop
    controller: str = "kmpc"
    duration: float = 0.12
    warmup: float = 0.1
    P_high: float = 100.0
    t_start: float = 0.034
    t_end: float = 0.054
    r_mismatch: float = 0.0
    pf_min: float = 0.9
    horizon: int = 3
    slack_weight: float = 1e4
    input_band: float = 0.1
    plots: bool = False

    def __post_init__(self):
        if self.mode not in ("switched", "averaged"):
            raise ConfigError(f"mode must be switched or averaged, not {self.mode!r}")
        if self.controller not in ("kmpc", "ida_pbc", "pi_pr"):
            raise ConfigError(f"unknown controller {self.controller!r}")
        if not 0.0 <= self.t_start < self.t_end < self.duration:
            raise ConfigError("load step needs 0 <= t_start < t_end < duration")

    def params(self, r_scale: float = 1.0) -> ConverterParams:
        return ConverterParams(L=self.L, C=self.C, G=self.G, P=self.P, r=self.r * r_scale,
                               E=self.E, omega=2.0 * math.pi * self.f_grid, V_d=self.V_d,
                               f_sw=self.f_sw, i_limit=self.i_limit, v_min=self.v_min,
                               dt_sample=self.dt_sample)

    def controller_params(self) -> ConverterParams:
        """What the controllers believe; differs from the plant by ``r_mismatch``."""
        return self.params(1.0 + self.r_mismatch)

    def updated(self, **changes) -> "RunConfig":
        d = asdict(self)
        d.update(changes)
        return RunConfig(**d)

    def dumps(self) -> str:
        return "".join(f"{f.name} = {_fmt(getattr(self, f.name))}\n" for f in fields(self))


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _parse(key: str, raw: str):
    if key not in _TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    kind = _TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key} ({kind})") from None


def parse_assignments(pairs) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = _parse(k.strip(), v)
    return out


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path is not None:
        for n, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected 'key = value'")
            k, v = line.split("=", 1)
            values[k.strip()] = _parse(k.strip(), v)
    values.update(overrides or {})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
