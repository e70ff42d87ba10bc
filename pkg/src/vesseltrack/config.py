"""Sequence configuration, presets and the flat ``key = value`` config format.

Config files hold one ``key = value`` pair per line; ``#`` starts a comment.
Top-level keys mirror :class:`SequenceConfig` fields, nested parameter blocks
use a dotted prefix (``drlse.timestep = 8``, ``ekf.r = 1,1,2,2``).  EKF matrix
keys (``ekf.a1``, ``ekf.a2``, ``ekf.p0``, ``ekf.q``, ``ekf.r``) take either a
scalar or four comma-separated values and set the diagonal.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Literal, Optional

import numpy as np

from .errors import ConfigError

PRESETS = ("uhfus", "hfus")
UHFUS_PITCH_MM = 0.0116
HFUS_PITCH_MM = 0.0925


@dataclass(frozen=True)
class DrlseParams:
    """Constants of the level-set gradient flow.

    Each of the ``iterations`` steps advances the flow by ``timestep``.  An
    explicit Euler step of that size is unstable for the distance regulariser
    when ``mu * timestep >= 0.25``, so a step is split into ``substeps`` equal
    explicit sub-steps (``None`` picks the smallest count with
    ``mu * timestep / substeps <= MAX_REG_STEP``).
    """

    timestep: float = 10.0
    mu: float = 0.2
    lam: float = 1.0
    alpha: float = -1.0
    epsilon: float = 1.0
    iterations: int = 15
    narrowband_halfwidth: int = 3
    c0: float = 2.0
    edge_sigma: float = 0.3
    substeps: Optional[int] = None

    MAX_REG_STEP = 0.2

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("drlse.iterations must be >= 1")
        if self.epsilon <= 0:
            raise ConfigError("drlse.epsilon must be > 0")
        if self.timestep <= 0:
            raise ConfigError("drlse.timestep must be > 0")
        if self.mu < 0:
            raise ConfigError("drlse.mu must be >= 0")
        if self.substeps is not None and self.substeps < 1:
            raise ConfigError("drlse.substeps must be >= 1")
        if self.mu * self.sub_timestep >= 0.25:
            raise ConfigError(
                f"mu * sub-step = {self.mu * self.sub_timestep:.3g} violates the 0.25 stability bound; "
                "raise drlse.substeps"
            )
        if self.narrowband_halfwidth < 1:
            raise ConfigError("drlse.narrowband_halfwidth must be >= 1")
        if self.c0 <= 0:
            raise ConfigError("drlse.c0 must be > 0")
        if self.edge_sigma <= 0:
            raise ConfigError("drlse.edge_sigma must be > 0")

    @property
    def n_substeps(self) -> int:
        if self.substeps is not None:
            return self.substeps
        return max(1, int(np.ceil(self.mu * self.timestep / self.MAX_REG_STEP - 1e-12)))

    @property
    def sub_timestep(self) -> float:
        return self.timestep / self.n_substeps


def _diag(v) -> np.ndarray:
    v = np.broadcast_to(np.asarray(v, dtype=float), (4,))
    return np.diag(v)


@dataclass(frozen=True)
class EkfParams:
    A1: np.ndarray = field(default_factory=lambda: _diag(1.5))
    A2: np.ndarray = field(default_factory=lambda: _diag(-0.5))
    P0: np.ndarray = field(default_factory=lambda: _diag(1000.0))
    Q: np.ndarray = field(default_factory=lambda: _diag(0.001))
    R: np.ndarray = field(default_factory=lambda: _diag(1.0))

    def __post_init__(self):
        for name in ("A1", "A2", "P0", "Q", "R"):
            m = np.array(getattr(self, name), dtype=float)
            if m.shape != (4, 4):
                raise ConfigError(f"ekf.{name} must be 4x4, got {m.shape}")
            if name in ("P0", "Q", "R"):
                if not np.allclose(m, m.T):
                    raise ConfigError(f"ekf.{name} must be symmetric")
                if np.linalg.eigvalsh(m).min() < -1e-12:
                    raise ConfigError(f"ekf.{name} must be positive semi-definite")
            m.flags.writeable = False
            object.__setattr__(self, name, m)


@dataclass(frozen=True)
class SequenceConfig:
    downsample_factor: int = 4
    bilateral_kernel: int = 5
    bilateral_sigma_spatial: Optional[float] = None  # None: kernel / 2.5
    bilateral_sigma_range: float = 25.0
    cluster_kernel: Optional[int] = None  # None: chosen from frame 0's vessel size
    cauchy_w0: float = 10.0
    cauchy_u: float = 1.0
    fa_threshold_mode: Literal["fixed", "rayleigh_estimate"] = "rayleigh_estimate"
    fa_threshold: float = 0.0
    fa_epsilon: float = 1e-6
    fa_min: float = 0.3
    radial_n: int = 360
    radial_m: int = 100
    shrink_factor: float = 0.75
    radial_outlier_tol: Optional[float] = 0.25  # None keeps every radial hit
    drlse: DrlseParams = field(default_factory=DrlseParams)
    ekf: EkfParams = field(default_factory=EkfParams)
    pixel_pitch_mm: float = UHFUS_PITCH_MM
    small_vessel_diameter_px: float = 70.0
    threads: Optional[int] = None

    def __post_init__(self):
        if self.downsample_factor < 1:
            raise ConfigError("downsample_factor must be >= 1")
        for name in ("bilateral_kernel", "cluster_kernel"):
            k = getattr(self, name)
            if k is not None and (k < 3 or k % 2 == 0):
                raise ConfigError(f"{name} must be odd and >= 3, got {k}")
        if self.radial_n < 8:
            raise ConfigError("radial_n must be >= 8")
        if self.radial_m < 3:
            raise ConfigError("radial_m must be >= 3")
        if not (0 < self.shrink_factor < 1):
            raise ConfigError("shrink_factor must lie in (0, 1)")
        if self.radial_outlier_tol is not None and self.radial_outlier_tol <= 0:
            raise ConfigError("radial_outlier_tol must be > 0 or None")
        if self.pixel_pitch_mm <= 0:
            raise ConfigError("pixel_pitch_mm must be > 0")
        if self.cauchy_u < 1 or self.cauchy_w0 <= 0:
            raise ConfigError("cauchy filter needs u >= 1 and w0 > 0")
        if self.fa_threshold_mode not in ("fixed", "rayleigh_estimate"):
            raise ConfigError(f"unknown fa_threshold_mode {self.fa_threshold_mode!r}")
        if not (0 <= self.fa_threshold < 1) or self.fa_epsilon <= 0:
            raise ConfigError("fa_threshold must lie in [0, 1) and fa_epsilon be > 0")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")

    @property
    def sigma_spatial(self) -> float:
        if self.bilateral_sigma_spatial is not None:
            return self.bilateral_sigma_spatial
        return self.bilateral_kernel / 2.5


def preset(name: str) -> SequenceConfig:
    """Parameter set for the ``uhfus`` or ``hfus`` acquisition setting."""
    if name == "uhfus":
        return SequenceConfig()
    if name == "hfus":
        # coarser native pitch: halve rather than quarter the resolution
        return SequenceConfig(
            downsample_factor=2,
            bilateral_kernel=3,
            cauchy_w0=5.0,
            drlse=DrlseParams(timestep=8.0),
            pixel_pitch_mm=HFUS_PITCH_MM,
        )
    raise ConfigError(f"unknown preset {name!r}; expected one of {PRESETS}")


def _coerce(value: str, current, name: str):
    text = value.strip()
    if isinstance(current, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if current is None:
        if text.lower() in ("none", "auto", ""):
            return None
        try:
            return int(text)
        except ValueError:
            return float(text)
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, np.ndarray):
        vals = [float(v) for v in text.split(",")]
        if len(vals) not in (1, 4):
            raise ConfigError(f"{name}: expected 1 or 4 values, got {len(vals)}")
        return _diag(vals)
    return text


def apply_overrides(config: SequenceConfig, overrides) -> SequenceConfig:
    """Return ``config`` with ``(key, value)`` string pairs applied."""
    top: dict = {}
    nested: dict[str, dict] = {"drlse": {}, "ekf": {}}
    top_names = {f.name for f in fields(SequenceConfig)}
    for key, value in overrides:
        key = key.strip()
        if "." in key:
            block, sub = key.split(".", 1)
            if block not in nested:
                raise ConfigError(f"unknown config block {block!r}")
            target = getattr(config, block)
            if block == "ekf":
                sub = sub.upper()
            if sub not in {f.name for f in fields(target)}:
                raise ConfigError(f"unknown config key {key!r}")
            nested[block][sub] = _coerce(value, getattr(target, sub), key)
        else:
            if key not in top_names or key in nested:
                raise ConfigError(f"unknown config key {key!r}")
            top[key] = _coerce(value, getattr(config, key), key)
    try:
        for block, kv in nested.items():
            if kv:
                top[block] = replace(getattr(config, block), **kv)
        return replace(config, **top)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config_text(text: str) -> list[tuple[str, str]]:
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def load_config(path, base: SequenceConfig | None = None) -> SequenceConfig:
    text = Path(path).read_text()
    pairs = parse_config_text(text)
    base = base or SequenceConfig()
    # a preset line, if any, replaces the base before the other keys apply
    rest = []
    for key, value in pairs:
        if key == "preset":
            base = preset(value)
        else:
            rest.append((key, value))
    return apply_overrides(base, rest)


def dump_config(config: SequenceConfig) -> str:
    """Serialise ``config`` in the same flat format :func:`load_config` reads."""
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if dataclasses.is_dataclass(value):
            for sub in fields(value):
                v = getattr(value, sub.name)
                if isinstance(v, np.ndarray):
                    v = ",".join(repr(float(d)) for d in np.diag(v))
                lines.append(f"{f.name}.{sub.name.lower()} = {v}")
        else:
            lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
