"""Two-level radiance caching renderer.

Screen-space hemispherical probes cache incoming radiance at primary visible
surfaces; a world-space hash grid caches irradiance at secondary vertices.
Reservoir-based light sampling feeds the world cache, spherical harmonics turn
probes into per-pixel irradiance, and an optional screen-space horizon pass
adds near-field occlusion.
"""

from .config import PipelineConfig, ConfigError, load_config
from .scene import Scene, SceneError, load_scene, eval_environment
from .pipeline import run_sequence, PassError
from .images import read_pfm, write_pfm, write_png, compare_images

__all__ = [
    "PipelineConfig",
    "ConfigError",
    "load_config",
    "Scene",
    "SceneError",
    "load_scene",
    "eval_environment",
    "run_sequence",
    "PassError",
    "read_pfm",
    "write_pfm",
    "write_png",
    "compare_images",
]
