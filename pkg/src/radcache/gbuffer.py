"""Primary-visibility buffers and motion vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import interpolate_hit, trace_closest


@dataclass
class GBuffer:
    width: int
    height: int
    position: np.ndarray  # (H, W, 3) world
    normal: np.ndarray  # (H, W, 3) unit, faces the camera
    depth: np.ndarray  # (H, W) camera-space Euclidean distance, inf for sky
    albedo: np.ndarray  # (H, W, 3)
    emissive: np.ndarray  # (H, W, 3)
    instance: np.ndarray  # (H, W) int32, -1 for sky
    prim: np.ndarray  # (H, W) int32, -1 for sky
    motion: np.ndarray  # (H, W, 2) pixel delta, current -> previous frame
    view_dir: np.ndarray  # (H, W, 3) unit, camera -> pixel

    @property
    def sky(self):
        return self.instance < 0


def render_gbuffer(scene, frame_index, camera=None, prev_camera=None):
    """Rasterize-by-raycast G-buffer for one frame.

    Motion vectors map each surviving surface point to its previous-frame
    pixel via the previous instance transform and camera: q = p + motion.
    On the first frame previous state defaults to current, so motion is ~0.
    """
    cam = camera if camera is not None else scene.camera_at(frame_index)
    prev_frame = max(frame_index - 1, 0)
    pcam = prev_camera if prev_camera is not None else scene.camera_at(prev_frame)
    geom = scene.geometry_at(frame_index)
    prev_geom = scene.geometry_at(prev_frame)

    H, W = cam.height, cam.width
    py, px = np.mgrid[0:H, 0:W]
    dirs = cam.pixel_rays(px.ravel(), py.ravel())
    origins = np.broadcast_to(cam.position, dirs.shape)
    hits = trace_closest(geom, origins, dirs)

    prim = hits["prim"].reshape(H, W)
    tval = hits["t"].reshape(H, W)
    u = hits["u"].reshape(H, W)
    v = hits["v"].reshape(H, W)
    hitmask = prim >= 0

    position = np.zeros((H, W, 3))
    normal = np.zeros((H, W, 3))
    normal[..., 2] = 1.0
    albedo = np.zeros((H, W, 3))
    emissive = np.zeros((H, W, 3))
    depth = np.full((H, W), np.inf)
    instance = np.full((H, W), -1, dtype=np.int32)
    motion = np.zeros((H, W, 2))
    view_dir = dirs.reshape(H, W, 3)

    if np.any(hitmask):
        hp = prim[hitmask]
        pos, n = interpolate_hit(geom, hp, u[hitmask], v[hitmask])
        # two-sided shading: flip the normal toward the viewer
        facing = np.sum(n * view_dir[hitmask], axis=-1)
        n = np.where(facing[:, None] > 0.0, -n, n)
        position[hitmask] = pos
        normal[hitmask] = n
        depth[hitmask] = tval[hitmask]
        instance[hitmask] = geom.tri_instance[hp]
        mat = geom.tri_material[hp]
        albedo[hitmask] = geom.albedo[mat]
        emissive[hitmask] = geom.emissive[mat]

        # previous-frame position of the same surface point (same prim + bary)
        prev_pos, _ = interpolate_hit(prev_geom, hp, u[hitmask], v[hitmask])
        prev_px, _, in_front = pcam.project(prev_pos)
        cur_px = np.stack([px[hitmask], py[hitmask]], axis=-1).astype(np.float64)
        mv = np.where(in_front[:, None], prev_px - cur_px, 0.0)
        motion[hitmask] = mv

    return GBuffer(
        width=W,
        height=H,
        position=position,
        normal=normal,
        depth=depth,
        albedo=albedo,
        emissive=emissive,
        instance=instance,
        prim=prim,
        motion=motion,
        view_dir=view_dir,
    )
