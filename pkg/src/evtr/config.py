"""Run configuration: a flat ``key=value`` text format with typed defaults.

Defaults follow the reported robot setup (66 ms windows, 0.35 m/s, 0.2 m /
15 degree recording intervals, 320x180 frames, +-4 search frames, 36 degree
field of view, gains 1.5e-3 / 1.5e-5, compression 8). Simulator-only knobs
(drift, spurious events, control period) have neutral defaults.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Union

from evtr.controller import CorrectionGains, MotionParams


class ConfigError(ValueError):
    pass


@dataclass
class DriftModel:
    """Odometry error model.

    Wheel scales multiply each wheel's measured speed; noise sigmas are per
    square-root meter travelled; ``bias_rot`` is a constant heading drift per
    meter travelled.
    """

    wheel_scale_left: float = 1.0
    wheel_scale_right: float = 1.0
    noise_sigma_trans: float = 0.0
    noise_sigma_rot: float = 0.0
    bias_rot: float = 0.0
    track_width: float = 0.5

    def validate(self) -> None:
        if self.wheel_scale_left <= 0 or self.wheel_scale_right <= 0:
            raise ConfigError("wheel scales must be positive")
        if self.noise_sigma_trans < 0 or self.noise_sigma_rot < 0:
            raise ConfigError("noise sigmas must be non-negative")
        if self.track_width <= 0:
            raise ConfigError("track_width must be positive")

    @property
    def is_identity(self) -> bool:
        return (self.wheel_scale_left == 1.0 and self.wheel_scale_right == 1.0
                and self.noise_sigma_trans == 0.0 and self.noise_sigma_rot == 0.0
                and self.bias_rot == 0.0)


_DRIFT_KEYS = [f.name for f in fields(DriftModel)]


@dataclass
class Config:
    tau_us: int = 66_000
    v: float = 0.35
    delta_d: float = 0.2
    delta_alpha_deg: float = 15.0
    width: int = 320
    height: int = 180
    s: int = 4
    fov_deg: float = 36.0
    g_theta: float = 1.5e-3
    g_rho: float = 1.5e-5
    M: int = 8
    rho_bar: str = "median"
    heading_gain: float = 2.0
    max_omega: float = 1.5
    goal_tolerance: float = 0.05
    control_hop_us: int = 10_000
    microstep_us: int = 1_000
    lookahead: float = 0.6
    failure_radius: float = 0.5
    max_time_factor: float = 3.0
    spurious_rate: float = 0.0
    seed: int = 0
    timing: bool = False
    drift_wheel_scale_left: float = 1.0
    drift_wheel_scale_right: float = 1.0
    drift_noise_sigma_trans: float = 0.0
    drift_noise_sigma_rot: float = 0.0
    drift_bias_rot: float = 0.0
    drift_track_width: float = 0.5
    teach_drift_wheel_scale_left: float = 1.0
    teach_drift_wheel_scale_right: float = 1.0
    teach_drift_noise_sigma_trans: float = 0.0
    teach_drift_noise_sigma_rot: float = 0.0
    teach_drift_bias_rot: float = 0.0
    teach_drift_track_width: float = 0.5

    def __post_init__(self) -> None:
        self.validate()

    @property
    def delta_alpha(self) -> float:
        return math.radians(self.delta_alpha_deg)

    def drift(self, phase: str = "repeat") -> DriftModel:
        prefix = "drift_" if phase == "repeat" else "teach_drift_"
        return DriftModel(**{k: getattr(self, prefix + k) for k in _DRIFT_KEYS})

    def gains(self) -> CorrectionGains:
        rho_bar = self.rho_bar if self.rho_bar == "median" else float(self.rho_bar)
        return CorrectionGains(self.g_theta, self.g_rho, rho_bar)

    def motion(self) -> MotionParams:
        return MotionParams(self.v, self.heading_gain, self.max_omega, self.goal_tolerance)

    def validate(self) -> None:
        positive = ["tau_us", "v", "delta_d", "delta_alpha_deg", "width", "height", "M",
                    "control_hop_us", "microstep_us", "lookahead", "failure_radius",
                    "max_time_factor", "max_omega"]
        for key in positive:
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive, got {getattr(self, key)}")
        if not 0 < self.fov_deg < 180:
            raise ConfigError("fov_deg must lie in (0, 180)")
        if self.s < 0:
            raise ConfigError("s must be non-negative")
        if self.M > self.width:
            raise ConfigError("M cannot exceed the frame width")
        for key in ("g_theta", "g_rho", "heading_gain", "goal_tolerance", "spurious_rate"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be non-negative")
        if self.control_hop_us % self.microstep_us:
            raise ConfigError("control_hop_us must be a multiple of microstep_us")
        if self.rho_bar != "median":
            try:
                float(self.rho_bar)
            except ValueError:
                raise ConfigError(f"rho_bar must be 'median' or a number, got {self.rho_bar!r}")
        self.drift("repeat").validate()
        self.drift("teach").validate()

    def with_overrides(self, pairs: Iterable[str]) -> "Config":
        values = dataclasses.asdict(self)
        values.update(_parse_pairs(pairs, "--set"))
        return Config(**_coerce(values))

    def dumps(self) -> str:
        lines = [f"{f.name}={_fmt(getattr(self, f.name))}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    def dump(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str, source: str = "<config>") -> "Config":
        return cls(**_coerce(_parse_pairs(text.splitlines(), source)))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Config":
        return cls.loads(Path(path).read_text(), str(path))


_TYPES = {f.name: f.type for f in fields(Config)}


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _parse_pairs(lines: Iterable[str], source: str) -> dict:
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def _coerce(values: dict) -> dict:
    out = {}
    for key, value in values.items():
        if not isinstance(value, str):
            out[key] = value
            continue
        kind = _TYPES[key]
        try:
            if kind == "bool":
                low = value.lower()
                if low not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
                    raise ValueError(value)
                out[key] = low in ("true", "1", "yes", "on")
            elif kind == "int":
                out[key] = int(value)
            elif kind == "float":
                out[key] = float(value)
            else:
                out[key] = value
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {value!r} as {kind}") from None
    return out
