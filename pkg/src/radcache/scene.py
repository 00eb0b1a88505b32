"""Scene description: JSON manifest + OBJ meshes, lights, environment, camera.

The manifest references OBJ geometry (positions and normals only), assigns flat
materials (albedo + emissive) per instance, and carries an explicit light list
plus an environment term. Instances and the camera may be keyframed per frame
index; frame 0 state doubles as the "previous" state on the first frame so
motion vectors start at zero.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .mathutils import normalize, rel_luminance


class SceneError(Exception):
    """Raised for malformed scene manifests, meshes or references."""


# ---------------------------------------------------------------------------
# Meshes
# ---------------------------------------------------------------------------


@dataclass
class Mesh:
    name: str
    positions: np.ndarray  # (V, 3)
    normals: np.ndarray  # (N, 3) unit
    faces_pos: np.ndarray  # (F, 3) indices into positions
    faces_nrm: np.ndarray  # (F, 3) indices into normals


def load_obj(path, name="mesh"):
    """Minimal OBJ reader: v, vn and f records; polygons fan-triangulated.

    Faces without normal indices get flat per-face normals.
    """
    positions = []
    normals = []
    faces = []  # list of [(pi, ni or None), ...]
    try:
        with open(path, "r") as fh:
            lines = fh.readlines()
    except OSError as e:
        raise SceneError(f"cannot read OBJ file {path!r}: {e}") from e
    for lineno, line in enumerate(lines, 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise SceneError(f"{path}:{lineno}: vertex needs 3 coordinates")
            positions.append([float(parts[1]), float(parts[2]), float(parts[3])])
        elif tag == "vn":
            if len(parts) < 4:
                raise SceneError(f"{path}:{lineno}: normal needs 3 coordinates")
            normals.append([float(parts[1]), float(parts[2]), float(parts[3])])
        elif tag == "f":
            corner = []
            for tok in parts[1:]:
                comps = tok.split("/")
                pi = int(comps[0])
                ni = None
                if len(comps) == 3 and comps[2]:
                    ni = int(comps[2])
                if pi < 0 or (ni is not None and ni < 0):
                    raise SceneError(f"{path}:{lineno}: negative indices unsupported")
                corner.append((pi - 1, None if ni is None else ni - 1))
            if len(corner) < 3:
                raise SceneError(f"{path}:{lineno}: face needs >= 3 vertices")
            for k in range(1, len(corner) - 1):
                faces.append([corner[0], corner[k], corner[k + 1]])
        # vt, o, g, s, usemtl etc. are ignored
    if not positions or not faces:
        raise SceneError(f"{path}: no geometry")
    positions = np.asarray(positions, dtype=np.float64)
    normals_arr = np.asarray(normals, dtype=np.float64) if normals else np.zeros((0, 3))
    if normals_arr.shape[0]:
        normals_arr = normalize(normals_arr)

    faces_pos = np.array([[c[0] for c in f] for f in faces], dtype=np.int64)
    if faces_pos.max() >= positions.shape[0]:
        raise SceneError(f"{path}: face index out of range")

    # Fill missing normal references with generated flat normals.
    gen_normals = list(normals_arr)
    faces_nrm = np.zeros_like(faces_pos)
    for fi, f in enumerate(faces):
        if all(c[1] is not None for c in f):
            idx = [c[1] for c in f]
            if max(idx) >= normals_arr.shape[0]:
                raise SceneError(f"{path}: normal index out of range")
            faces_nrm[fi] = idx
        else:
            a, b, c = positions[faces_pos[fi]]
            n = np.cross(b - a, c - a)
            ln = np.linalg.norm(n)
            if ln == 0.0:
                n = np.array([0.0, 0.0, 1.0])
            else:
                n = n / ln
            gen_normals.append(n)
            faces_nrm[fi] = len(gen_normals) - 1
    return Mesh(
        name=name,
        positions=positions,
        normals=np.asarray(gen_normals, dtype=np.float64),
        faces_pos=faces_pos,
        faces_nrm=faces_nrm,
    )


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------


def _parse_transform(obj, where):
    """4x4 matrix from a nested list, flat 16-list, or a TRS dict."""
    if obj is None:
        return np.eye(4)
    if isinstance(obj, dict):
        m = np.eye(4)
        if "scale" in obj:
            s = obj["scale"]
            s = [s, s, s] if isinstance(s, (int, float)) else s
            m[:3, :3] = np.diag(np.asarray(s, dtype=np.float64))
        if "rotate_deg" in obj:
            axis = normalize(np.asarray(obj.get("rotate_axis", [0, 1, 0]), dtype=np.float64))
            ang = math.radians(float(obj["rotate_deg"]))
            c, s_ = math.cos(ang), math.sin(ang)
            x, y, z = axis
            r = np.array(
                [
                    [c + x * x * (1 - c), x * y * (1 - c) - z * s_, x * z * (1 - c) + y * s_],
                    [y * x * (1 - c) + z * s_, c + y * y * (1 - c), y * z * (1 - c) - x * s_],
                    [z * x * (1 - c) - y * s_, z * y * (1 - c) + x * s_, c + z * z * (1 - c)],
                ]
            )
            m[:3, :3] = r @ m[:3, :3]
        if "translate" in obj:
            m[:3, 3] = np.asarray(obj["translate"], dtype=np.float64)
        return m
    arr = np.asarray(obj, dtype=np.float64)
    if arr.shape == (16,):
        arr = arr.reshape(4, 4)
    if arr.shape != (4, 4):
        raise SceneError(f"{where}: transform must be 4x4, flat 16, or TRS dict")
    return arr


@dataclass
class Instance:
    mesh: int
    material: int
    transform: np.ndarray  # (4, 4) rest transform
    track: list = field(default_factory=list)  # sorted [(frame, 4x4)], step-held

    def transform_at(self, frame):
        m = self.transform
        for f, t in self.track:
            if f <= frame:
                m = t
            else:
                break
        return m


@dataclass
class Material:
    name: str
    albedo: np.ndarray  # (3,)
    emissive: np.ndarray  # (3,)


# ---------------------------------------------------------------------------
# Lights
# ---------------------------------------------------------------------------

LIGHT_KINDS = ("point", "spot", "directional", "area", "environment")


@dataclass
class Light:
    kind: str
    position: np.ndarray | None = None  # point / spot
    intensity: np.ndarray | None = None  # point / spot, W/sr per channel
    max_distance: float = float("inf")  # point / spot range cutoff
    direction: np.ndarray | None = None  # spot axis / directional travel dir
    cos_inner: float = 1.0
    cos_outer: float = 0.0
    irradiance: np.ndarray | None = None  # directional, on a facing surface
    triangles: np.ndarray | None = None  # area, (K, 3, 3)
    radiance: np.ndarray | None = None  # area, emitted (one-sided)

    # Derived, filled by _finish()
    areas: np.ndarray | None = None
    total_area: float = 0.0
    centroid: np.ndarray | None = None
    radiant_peak: float = 0.0  # luminance x area for area lights

    def _finish(self):
        if self.kind == "area":
            a = self.triangles[:, 1] - self.triangles[:, 0]
            b = self.triangles[:, 2] - self.triangles[:, 0]
            self.areas = 0.5 * np.linalg.norm(np.cross(a, b), axis=-1)
            self.total_area = float(self.areas.sum())
            if self.total_area <= 0.0:
                raise SceneError("area light has zero total area")
            self.centroid = (
                self.triangles.mean(axis=1) * (self.areas[:, None] / self.total_area)
            ).sum(axis=0)
            self.radiant_peak = float(rel_luminance(self.radiance) * self.total_area)
        return self


def _parse_light(obj, idx):
    kind = obj.get("kind")
    if kind not in LIGHT_KINDS:
        raise SceneError(f"lights[{idx}]: unknown kind {kind!r}")
    v3 = lambda key: np.asarray(obj[key], dtype=np.float64)
    try:
        if kind == "point":
            return Light(
                kind=kind,
                position=v3("position"),
                intensity=v3("intensity"),
                max_distance=float(obj.get("max_distance", float("inf"))),
            )
        if kind == "spot":
            inner = math.radians(float(obj.get("inner_deg", 20.0)))
            outer = math.radians(float(obj.get("outer_deg", 30.0)))
            return Light(
                kind=kind,
                position=v3("position"),
                intensity=v3("intensity"),
                max_distance=float(obj.get("max_distance", float("inf"))),
                direction=normalize(v3("direction")),
                cos_inner=math.cos(inner),
                cos_outer=math.cos(outer),
            )
        if kind == "directional":
            return Light(kind=kind, direction=normalize(v3("direction")), irradiance=v3("irradiance"))
        if kind == "area":
            tris = np.asarray(obj["triangles"], dtype=np.float64)
            if tris.ndim != 3 or tris.shape[1:] != (3, 3):
                raise SceneError(f"lights[{idx}]: area triangles must be (K,3,3)")
            return Light(kind=kind, triangles=tris, radiance=v3("radiance"))._finish()
        return Light(kind="environment")
    except KeyError as e:
        raise SceneError(f"lights[{idx}]: missing field {e}") from e


# ---------------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------------


@dataclass
class Environment:
    kind: str  # "constant" | "latlong"
    radiance: np.ndarray | None = None  # constant RGB
    image: np.ndarray | None = None  # (H, W, 3) linear, latlong

    def mean_radiance(self):
        if self.kind == "constant":
            return self.radiance
        return self.image.mean(axis=(0, 1))


def eval_environment(env, dirs):
    """Environment radiance for unit directions, shape (..., 3).

    Lat-long mapping: v runs 0 at +y (top row) to 1 at -y, u = atan2(x, -z)
    wrapped to [0, 1); bilinear filtered, u wraps, v clamps.
    """
    dirs = np.asarray(dirs, dtype=np.float64)
    if env is None:
        return np.zeros(dirs.shape[:-1] + (3,))
    if env.kind == "constant":
        return np.broadcast_to(env.radiance, dirs.shape[:-1] + (3,)).copy()
    img = env.image
    h, w = img.shape[:2]
    y = np.clip(dirs[..., 1], -1.0, 1.0)
    v = np.arccos(y) / np.pi
    u = np.arctan2(dirs[..., 0], -dirs[..., 2]) / (2.0 * np.pi) + 0.5
    fx = u * w - 0.5
    fy = v * h - 0.5
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    tx = (fx - x0)[..., None]
    ty = (fy - y0)[..., None]
    x1 = (x0 + 1) % w
    x0 = x0 % w
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    c00 = img[y0c, x0]
    c10 = img[y0c, x1]
    c01 = img[y1c, x0]
    c11 = img[y1c, x1]
    return (c00 * (1 - tx) + c10 * tx) * (1 - ty) + (c01 * (1 - tx) + c11 * tx) * ty


def _parse_environment(obj, base_dir):
    if obj is None:
        return Environment(kind="constant", radiance=np.zeros(3))
    kind = obj.get("kind", "constant")
    if kind == "constant":
        return Environment(kind="constant", radiance=np.asarray(obj.get("radiance", [0, 0, 0]), dtype=np.float64))
    if kind == "latlong":
        from .images import read_pfm

        path = os.path.join(base_dir, obj["image"])
        try:
            img = read_pfm(path)
        except OSError as e:
            raise SceneError(f"environment image {path!r}: {e}") from e
        return Environment(kind="latlong", image=np.asarray(img, dtype=np.float64))
    raise SceneError(f"environment: unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# Camera
# ---------------------------------------------------------------------------


@dataclass
class Camera:
    """Pinhole camera, right-handed, looking down -z in its own frame.

    `rotation` rows are (right, up, back): cam = rotation @ (p - position).
    Depth is stored as Euclidean camera distance throughout the pipeline.
    """

    position: np.ndarray
    rotation: np.ndarray  # (3, 3)
    fov_y: float
    width: int
    height: int

    @staticmethod
    def look_at(position, target, up, fov_y, width, height):
        position = np.asarray(position, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        fwd = normalize(target - position)
        right = np.cross(fwd, np.asarray(up, dtype=np.float64))
        ln = np.linalg.norm(right)
        if ln < 1e-12:
            raise SceneError("camera: up vector parallel to view direction")
        right = right / ln
        true_up = np.cross(right, fwd)
        rot = np.stack([right, true_up, -fwd], axis=0)
        return Camera(position, rot, float(fov_y), int(width), int(height))

    def pixel_rays(self, px, py):
        """World-space unit directions through pixel centers (px, py arrays)."""
        t = math.tan(self.fov_y * 0.5)
        aspect = self.width / self.height
        sx = (2.0 * (np.asarray(px, dtype=np.float64) + 0.5) / self.width - 1.0) * t * aspect
        sy = (1.0 - 2.0 * (np.asarray(py, dtype=np.float64) + 0.5) / self.height) * t
        d = np.stack([sx, sy, -np.ones_like(sx)], axis=-1)
        d = normalize(d)
        return d @ self.rotation  # R^T applied row-wise

    def project(self, points):
        """World points -> (pixel xy float, camera distance, valid in-front mask)."""
        p = np.asarray(points, dtype=np.float64)
        v = (p - self.position) @ self.rotation.T
        z = v[..., 2]
        valid = z < 0.0
        zsafe = np.where(valid, z, -1.0)
        t = math.tan(self.fov_y * 0.5)
        aspect = self.width / self.height
        sx = v[..., 0] / -zsafe
        sy = v[..., 1] / -zsafe
        px = (sx / (t * aspect) + 1.0) * 0.5 * self.width - 0.5
        py = (1.0 - sy / t) * 0.5 * self.height - 0.5
        dist = np.linalg.norm(v, axis=-1)
        return np.stack([px, py], axis=-1), dist, valid


def _lerp_vec(a, b, t):
    return np.asarray(a, dtype=np.float64) * (1.0 - t) + np.asarray(b, dtype=np.float64) * t


@dataclass
class CameraRig:
    keyframes: list  # sorted [(frame, dict with position/look_at/up/fov_y)]
    width: int
    height: int

    def camera_at(self, frame):
        kfs = self.keyframes
        if frame <= kfs[0][0]:
            k = kfs[0][1]
            return Camera.look_at(k["position"], k["look_at"], k["up"], k["fov_y"], self.width, self.height)
        if frame >= kfs[-1][0]:
            k = kfs[-1][1]
            return Camera.look_at(k["position"], k["look_at"], k["up"], k["fov_y"], self.width, self.height)
        for (f0, k0), (f1, k1) in zip(kfs, kfs[1:]):
            if f0 <= frame <= f1:
                t = 0.0 if f1 == f0 else (frame - f0) / (f1 - f0)
                return Camera.look_at(
                    _lerp_vec(k0["position"], k1["position"], t),
                    _lerp_vec(k0["look_at"], k1["look_at"], t),
                    _lerp_vec(k0["up"], k1["up"], t),
                    (1.0 - t) * k0["fov_y"] + t * k1["fov_y"],
                    self.width,
                    self.height,
                )
        raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# Scene
# ---------------------------------------------------------------------------


@dataclass
class FrameGeometry:
    """World-space triangle soup for one frame, plus per-triangle attributes."""

    tri_verts: np.ndarray  # (T, 3, 3)
    tri_normals: np.ndarray  # (T, 3, 3) unit, per corner
    tri_instance: np.ndarray  # (T,) int32
    tri_material: np.ndarray  # (T,) int32
    albedo: np.ndarray  # (M, 3)
    emissive: np.ndarray  # (M, 3)
    bvh: object = None  # built lazily by core tracing


class Scene:
    def __init__(self, meshes, materials, instances, lights, environment, rig):
        self.meshes = meshes
        self.materials = materials
        self.instances = instances
        self.lights = lights
        self.environment = environment
        self.rig = rig
        self._geom_cache = {}
        self.animated = any(inst.track for inst in instances)

        g = self.geometry_at(0)
        lo = g.tri_verts.reshape(-1, 3).min(axis=0)
        hi = g.tri_verts.reshape(-1, 3).max(axis=0)
        self.bounds = (lo, hi)
        self.diagonal = float(np.linalg.norm(hi - lo))

    def camera_at(self, frame):
        return self.rig.camera_at(frame)

    def geometry_at(self, frame):
        key = frame if self.animated else 0
        if key in self._geom_cache:
            return self._geom_cache[key]
        verts = []
        norms = []
        inst_ids = []
        mat_ids = []
        for ii, inst in enumerate(self.instances):
            mesh = self.meshes[inst.mesh]
            m = inst.transform_at(key)
            r = m[:3, :3]
            pos = mesh.positions @ r.T + m[:3, 3]
            nrm_mat = np.linalg.inv(r).T
            nrm = normalize(mesh.normals @ nrm_mat.T)
            verts.append(pos[mesh.faces_pos])
            norms.append(nrm[mesh.faces_nrm])
            inst_ids.append(np.full(mesh.faces_pos.shape[0], ii, dtype=np.int32))
            mat_ids.append(np.full(mesh.faces_pos.shape[0], inst.material, dtype=np.int32))
        geom = FrameGeometry(
            tri_verts=np.ascontiguousarray(np.concatenate(verts)),
            tri_normals=np.ascontiguousarray(np.concatenate(norms)),
            tri_instance=np.concatenate(inst_ids),
            tri_material=np.concatenate(mat_ids),
            albedo=np.stack([m.albedo for m in self.materials]),
            emissive=np.stack([m.emissive for m in self.materials]),
        )
        # keep at most the two frames the pipeline needs (previous + current)
        self._geom_cache = {k: v for k, v in self._geom_cache.items() if k >= key - 1}
        self._geom_cache[key] = geom
        return geom


def load_scene(path):
    """Parse a scene manifest (JSON). Raises SceneError on any problem."""
    try:
        with open(path, "r") as fh:
            doc = json.load(fh)
    except OSError as e:
        raise SceneError(f"cannot read scene {path!r}: {e}") from e
    except json.JSONDecodeError as e:
        raise SceneError(f"scene {path!r} is not valid JSON: {e}") from e
    base = os.path.dirname(os.path.abspath(path))
    return scene_from_dict(doc, base)


def scene_from_dict(doc, base_dir="."):
    if not isinstance(doc, dict):
        raise SceneError("scene root must be an object")
    try:
        mesh_defs = doc["meshes"]
        cam = doc["camera"]
    except KeyError as e:
        raise SceneError(f"scene missing section {e}") from e

    meshes = []
    mesh_index = {}
    for md in mesh_defs:
        name = md.get("name", f"mesh{len(meshes)}")
        meshes.append(load_obj(os.path.join(base_dir, md["obj"]), name=name))
        mesh_index[name] = len(meshes) - 1

    materials = []
    mat_index = {}
    for md in doc.get("materials", [{"name": "default", "albedo": [0.5, 0.5, 0.5]}]):
        name = md.get("name", f"mat{len(materials)}")
        alb = np.asarray(md.get("albedo", [0.5, 0.5, 0.5]), dtype=np.float64)
        emi = np.asarray(md.get("emissive", [0.0, 0.0, 0.0]), dtype=np.float64)
        if np.any(alb < 0.0) or np.any(alb > 1.0):
            raise SceneError(f"material {name!r}: albedo outside [0, 1]")
        materials.append(Material(name=name, albedo=alb, emissive=emi))
        mat_index[name] = len(materials) - 1

    instances = []
    for idx, idef in enumerate(doc.get("instances", [])):
        mref = idef.get("mesh")
        mesh_id = mesh_index.get(mref) if isinstance(mref, str) else mref
        if mesh_id is None or not (0 <= mesh_id < len(meshes)):
            raise SceneError(f"instances[{idx}]: unknown mesh {mref!r}")
        matref = idef.get("material", 0)
        mat_id = mat_index.get(matref) if isinstance(matref, str) else matref
        if mat_id is None or not (0 <= mat_id < len(materials)):
            raise SceneError(f"instances[{idx}]: unknown material {matref!r}")
        track = []
        for kf in idef.get("track", []):
            track.append((int(kf["frame"]), _parse_transform(kf.get("transform"), f"instances[{idx}].track")))
        track.sort(key=lambda kv: kv[0])
        instances.append(
            Instance(
                mesh=mesh_id,
                material=mat_id,
                transform=_parse_transform(idef.get("transform"), f"instances[{idx}]"),
                track=track,
            )
        )
    if not instances:
        raise SceneError("scene has no instances")

    lights = [_parse_light(ld, i) for i, ld in enumerate(doc.get("lights", []))]
    env = _parse_environment(doc.get("environment"), base_dir)

    width = int(cam.get("width", 128))
    height = int(cam.get("height", 128))
    if width <= 0 or height <= 0:
        raise SceneError("camera: width/height must be positive")
    fov_y = float(cam.get("fov_y", math.pi / 3.0))
    raw_path = cam.get("path")
    if raw_path is None:
        raw_path = [{"frame": 0, "position": cam["position"], "look_at": cam["look_at"], "up": cam.get("up", [0, 1, 0])}]
    keyframes = []
    for kf in raw_path:
        keyframes.append(
            (
                int(kf.get("frame", 0)),
                {
                    "position": kf["position"],
                    "look_at": kf["look_at"],
                    "up": kf.get("up", [0, 1, 0]),
                    "fov_y": float(kf.get("fov_y", fov_y)),
                },
            )
        )
    keyframes.sort(key=lambda kv: kv[0])
    rig = CameraRig(keyframes=keyframes, width=width, height=height)

    scene = Scene(meshes, materials, instances, lights, env, rig)
    if not np.isfinite(scene.diagonal) or scene.diagonal <= 0.0:
        raise SceneError("scene bounds are degenerate or non-finite")
    return scene
