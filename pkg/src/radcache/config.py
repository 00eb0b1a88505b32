"""Pipeline configuration: dataclasses + strict JSON loading.

The config file is JSON with sections mirroring the dataclasses below.
Unknown keys anywhere are rejected, as are type mismatches; missing keys fall
back to defaults. See README for the full schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields


class ConfigError(Exception):
    """Raised for unreadable, unparsable or schema-violating configs."""


@dataclass
class ScreenCacheConfig:
    upscale_x: int = 2  # spawn tile = upscale_x * upscale_y probe tiles
    upscale_y: int = 2
    normal_reuse_min: float = 0.95  # reprojection normal gate (dot product)
    hysteresis_max: float = 0.95  # clamp ceiling in the temporal blend
    filter_enabled: bool = True
    side_cache_capacity: int = 0  # 0 = number of probe tiles
    guiding_enabled: bool = True


@dataclass
class WorldCacheConfig:
    bucket_count: int = 1 << 16
    bucket_size: int = 8
    tile_capacity: int = 1 << 15
    base_cell_size: float = 0.0  # 0 = scene diagonal / 1024
    max_lod: int = 8
    ema_hysteresis: float = 0.98
    min_samples: int = 4  # N_min for a mip level to answer a query
    decay_init: int = 60
    leak_heuristic: bool = True  # short-ray descriptor bit
    temporal_feedback: bool = True


@dataclass
class LightSamplingConfig:
    candidate_count: int = 8
    lights_per_cell: int = 8  # top-K grid list size
    max_cell_count: int = 32
    cull_threshold: float = 0.01  # relative luminance
    m_cap: float = 20.0  # temporal M clamp multiplier


@dataclass
class IrradianceConfig:
    jitter_radius: float = 4.0  # pixels, interpolation jitter disk
    normal_similarity_power: float = 8.0
    distance_sigma: float = 8.0  # pixels, probe distance kernel
    accum_cap: int = 64  # temporal accumulation length cap
    n_full: int = 16  # frames to shrink the blur radius to zero
    r_max: float = 8.0  # pixels, disocclusion blur radius
    dilate: int = 1  # blur-mask dilation radius (1 = 3x3)
    history_normal_min: float = 0.9


@dataclass
class SsgiConfig:
    enabled: bool = True
    steps: int = 8  # marching steps per slice side
    radius: float = 0.25  # world-units scale, see ssgi.march_radius
    window_strength: float = 1.0


@dataclass
class PipelineConfig:
    seed: int = 0
    frames: int = 1
    deterministic: bool = True
    screen: ScreenCacheConfig = field(default_factory=ScreenCacheConfig)
    world: WorldCacheConfig = field(default_factory=WorldCacheConfig)
    lights: LightSamplingConfig = field(default_factory=LightSamplingConfig)
    irradiance: IrradianceConfig = field(default_factory=IrradianceConfig)
    ssgi: SsgiConfig = field(default_factory=SsgiConfig)


_SECTIONS = {
    "screen": ScreenCacheConfig,
    "world": WorldCacheConfig,
    "lights": LightSamplingConfig,
    "irradiance": IrradianceConfig,
    "ssgi": SsgiConfig,
}


def _fill(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    allowed = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r}")
        ftype = allowed[key].type
        if ftype == "int" and isinstance(value, bool):
            raise ConfigError(f"{where}.{key}: expected int, got bool")
        if ftype == "int" and not isinstance(value, int):
            raise ConfigError(f"{where}.{key}: expected int")
        if ftype == "float" and not isinstance(value, (int, float)):
            raise ConfigError(f"{where}.{key}: expected number")
        if ftype == "bool" and not isinstance(value, bool):
            raise ConfigError(f"{where}.{key}: expected bool")
        kwargs[key] = float(value) if ftype == "float" else value
    return cls(**kwargs)


def config_from_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    top = {}
    sections = {}
    for key, value in doc.items():
        if key in _SECTIONS:
            sections[key] = _fill(_SECTIONS[key], value, key)
        elif key in ("seed", "frames", "deterministic"):
            top[key] = value
        else:
            raise ConfigError(f"config: unknown key {key!r}")
    if "seed" in top and not isinstance(top["seed"], int):
        raise ConfigError("config.seed: expected int")
    if "frames" in top and (not isinstance(top["frames"], int) or top["frames"] < 1):
        raise ConfigError("config.frames: expected positive int")
    if "deterministic" in top and not isinstance(top["deterministic"], bool):
        raise ConfigError("config.deterministic: expected bool")
    cfg = PipelineConfig(**top, **sections)
    _validate(cfg)
    return cfg


def _validate(cfg):
    s = cfg.screen
    if s.upscale_x < 1 or s.upscale_y < 1:
        raise ConfigError("screen.upscale must be >= 1")
    w = cfg.world
    if w.bucket_count < 1 or (w.bucket_count & (w.bucket_count - 1)) != 0:
        raise ConfigError("world.bucket_count must be a power of two")
    if w.bucket_size < 1:
        raise ConfigError("world.bucket_size must be >= 1")
    if w.tile_capacity < 1:
        raise ConfigError("world.tile_capacity must be >= 1")
    if not (0.0 <= w.ema_hysteresis < 1.0):
        raise ConfigError("world.ema_hysteresis must be in [0, 1)")
    if w.max_lod < 0:
        raise ConfigError("world.max_lod must be >= 0")
    li = cfg.lights
    if li.candidate_count < 1 or li.lights_per_cell < 1 or li.max_cell_count < 1:
        raise ConfigError("lights: counts must be >= 1")
    if cfg.irradiance.accum_cap < 1 or cfg.irradiance.n_full < 1:
        raise ConfigError("irradiance: accumulation lengths must be >= 1")
    if cfg.ssgi.steps < 1:
        raise ConfigError("ssgi.steps must be >= 1")


def load_config(path):
    try:
        with open(path, "r") as fh:
            doc = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path!r}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path!r} is not valid JSON: {e}") from e
    return config_from_dict(doc)
