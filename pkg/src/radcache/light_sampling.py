"""Resampled light selection for secondary-vertex direct lighting.

A coarse uniform grid over the frame's secondary hit points stores a short
importance-sorted light list per cell. Each shading point streams a handful
of candidates from its cell list through weighted reservoir sampling, merges
the previous frame's reservoir from a world-space hash (with a clamped
history length), and finally spends a single shadow ray on the survivor.

Integrands here are irradiance integrands (radiance times geometry times
cosine, no BRDF), matching the quantity the world cache stores. The BRDF
enters only the resampling target weight, where it cancels out of the final
estimator. Reservoirs store the raw sample (light id plus a world point or
direction) so it can be re-evaluated at a different vertex during reuse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mathutils import orthonormal_basis, rel_luminance, to_world
from .scene import eval_environment

DELTA_PDF = 1.0  # discrete selection of point/spot/directional samples


def spot_falloff(light, dirs_to_surface):
    """Quadratic ramp between the inner (full) and outer (zero) cone angles."""
    cosg = dirs_to_surface @ light.direction
    denom = max(light.cos_inner - light.cos_outer, 1e-9)
    t = np.clip((cosg - light.cos_outer) / denom, 0.0, 1.0)
    return t * t


def light_aoe(light):
    """Bounding sphere of a light's influence; None means unbounded.

    Point and spot lights use their range cutoff; area lights bound the
    distance at which the strongest single-sample luminance falls below a
    fixed threshold; directional and environment lights reach everything.
    """
    if light.kind in ("point", "spot"):
        if not math.isfinite(light.max_distance):
            return None
        return np.asarray(light.position, dtype=np.float64), float(light.max_distance)
    if light.kind == "area":
        threshold = 1e-3
        radius = math.sqrt(max(light.radiant_peak, 0.0) / threshold)
        return np.asarray(light.centroid, dtype=np.float64), radius
    return None


@dataclass
class LightGrid:
    origin: np.ndarray
    edge: float
    dims: np.ndarray  # (3,) int
    cell_lights: np.ndarray  # (ncells, K) int32, -1 padded
    cell_count: np.ndarray  # (ncells,) int32
    n_lights: int

    def cell_of(self, pos):
        pos = np.atleast_2d(pos)
        c = np.floor((pos - self.origin) / self.edge).astype(np.int64)
        c = np.clip(c, 0, self.dims - 1)
        return (c[:, 0] * self.dims[1] + c[:, 1]) * self.dims[2] + c[:, 2]


def _corner_luminance(light, corners, env):
    """Scalar importance of a light as seen from cell corner points."""
    if light.kind in ("point", "spot"):
        d2 = np.sum((corners - light.position) ** 2, axis=-1)
        return rel_luminance(light.intensity) / np.maximum(d2, 1e-9)
    if light.kind == "area":
        d2 = np.sum((corners - light.centroid) ** 2, axis=-1)
        return light.radiant_peak / np.maximum(d2, 1e-9)
    if light.kind == "directional":
        return np.full(corners.shape[0], rel_luminance(light.irradiance))
    if light.kind == "environment":
        mean = env.mean_radiance() if env is not None else np.zeros(3)
        return np.full(corners.shape[0], rel_luminance(mean))
    return np.zeros(corners.shape[0])


def build_light_grid(lights, hit_points, env=None, max_cell_count=32, lights_per_cell=8, cull_threshold=0.01):
    """Cull and rank lights per cell of a uniform grid over the hit points.

    Cells are cubes sized so the largest AABB extent spans max_cell_count
    cells. A light survives culling when its influence sphere overlaps the
    cell's bounding sphere; survivors rank by mean corner luminance times
    cell volume, keeping the top lights_per_cell (importance below
    cull_threshold times the cell best is dropped). Empty input or empty
    cells fall back to sampling all lights uniformly.
    """
    n_lights = len(lights)
    if hit_points.shape[0] == 0 or n_lights == 0:
        return LightGrid(
            origin=np.zeros(3),
            edge=1.0,
            dims=np.ones(3, dtype=np.int64),
            cell_lights=np.full((1, max(lights_per_cell, 1)), -1, dtype=np.int32),
            cell_count=np.zeros(1, dtype=np.int32),
            n_lights=n_lights,
        )
    lo = hit_points.min(axis=0)
    hi = hit_points.max(axis=0)
    extent = np.maximum(hi - lo, 1e-9)
    edge = float(extent.max() / max_cell_count)
    dims = np.maximum(np.ceil(extent / edge - 1e-9).astype(np.int64), 1)
    ncells = int(dims.prod())

    aoes = [light_aoe(l) for l in lights]
    cell_r = edge * math.sqrt(3.0) / 2.0
    volume = edge ** 3

    ix, iy, iz = np.unravel_index(np.arange(ncells), dims)
    cell_lo = lo + np.stack([ix, iy, iz], axis=-1) * edge
    centers = cell_lo + 0.5 * edge
    corner_offsets = (
        np.stack(np.meshgrid([0.0, 1.0], [0.0, 1.0], [0.0, 1.0], indexing="ij"), axis=-1).reshape(8, 3)
        * edge
    )

    importance = np.zeros((ncells, n_lights))
    for li, light in enumerate(lights):
        aoe = aoes[li]
        reach = np.ones(ncells, dtype=bool)
        if aoe is not None:
            c, r = aoe
            reach = np.linalg.norm(centers - c, axis=-1) <= (r + cell_r)
        if not np.any(reach):
            continue
        corners = cell_lo[reach][:, None, :] + corner_offsets[None, :, :]
        lum = _corner_luminance(light, corners.reshape(-1, 3), env).reshape(-1, 8)
        importance[reach, li] = lum.mean(axis=-1) * volume

    K = lights_per_cell
    cell_lights = np.full((ncells, K), -1, dtype=np.int32)
    cell_count = np.zeros(ncells, dtype=np.int32)
    order = np.argsort(-importance, axis=-1, kind="stable")
    ranked = np.take_along_axis(importance, order, axis=-1)
    for c in range(ncells):
        best = ranked[c, 0]
        if best <= 0.0:
            continue
        keep = order[c][(ranked[c] > 0.0) & (ranked[c] >= cull_threshold * best)][:K]
        cell_lights[c, : keep.shape[0]] = keep
        cell_count[c] = keep.shape[0]
    return LightGrid(
        origin=lo,
        edge=edge,
        dims=dims,
        cell_lights=cell_lights,
        cell_count=cell_count,
        n_lights=n_lights,
    )


# ---------------------------------------------------------------------------
# Sample generation and re-evaluation
# ---------------------------------------------------------------------------


def sample_lights(lights, env, light_ids, pos, normal, rng):
    """One sample per row from each row's light.

    Returns (point (N, 3), aux_normal (N, 3), is_direction (N,), pdf (N,)).
    point holds a world position for finite lights and a unit direction for
    directional/environment rows (is_direction True); aux_normal is the area
    light's surface normal at the sample (zero otherwise). pdf is per area
    for area samples, per solid angle for environment samples (cosine about
    the vertex normal), and 1 for delta lights."""
    n = pos.shape[0]
    point = np.zeros((n, 3))
    aux_n = np.zeros((n, 3))
    is_dir = np.zeros(n, dtype=bool)
    pdf = np.ones(n)
    u = rng.random((n, 2))

    for li in np.unique(light_ids):
        if li < 0:
            continue
        m = light_ids == li
        light = lights[li]
        if light.kind in ("point", "spot"):
            point[m] = light.position
        elif light.kind == "directional":
            point[m] = -light.direction
            is_dir[m] = True
        elif light.kind == "area":
            k = int(m.sum())
            tri = rng.choice(light.triangles.shape[0], size=k, p=light.areas / light.total_area)
            b = u[m]
            su = np.sqrt(b[:, 0])
            bary = np.stack([1.0 - su, su * (1.0 - b[:, 1]), su * b[:, 1]], axis=-1)
            point[m] = np.einsum("kj,kjc->kc", bary, light.triangles[tri])
            e1 = light.triangles[tri, 1] - light.triangles[tri, 0]
            e2 = light.triangles[tri, 2] - light.triangles[tri, 0]
            ln = np.cross(e1, e2)
            aux_n[m] = ln / np.maximum(np.linalg.norm(ln, axis=-1, keepdims=True), 1e-12)
            pdf[m] = 1.0 / light.total_area
        elif light.kind == "environment":
            b = u[m]
            r = np.sqrt(b[:, 0])
            phi = 2.0 * np.pi * b[:, 1]
            local = np.stack(
                [r * np.cos(phi), r * np.sin(phi), np.sqrt(np.maximum(1.0 - b[:, 0], 0.0))], axis=-1
            )
            tb, bb = orthonormal_basis(normal[m])
            dn = to_world(tb, bb, normal[m], local)
            point[m] = dn
            is_dir[m] = True
            pdf[m] = np.maximum(np.sum(dn * normal[m], axis=-1), 0.0) / math.pi
    return point, aux_n, is_dir, pdf


def eval_samples(lights, env, light_ids, point, aux_n, is_dir, pos, normal):
    """Irradiance integrand f of stored samples at given vertices.

    Returns (f (N, 3), dirs (N, 3), dist (N,)). f is per unit of the sample's
    own measure (area, solid angle, or discrete); dist is the shadow-ray
    length (inf for direction samples)."""
    n = pos.shape[0]
    f = np.zeros((n, 3))
    dirs = np.zeros((n, 3))
    dist = np.full(n, np.inf)

    for li in np.unique(light_ids):
        if li < 0:
            continue
        m = light_ids == li
        light = lights[li]
        p = pos[m]
        nm = normal[m]
        if light.kind in ("point", "spot"):
            v = light.position - p
            d = np.linalg.norm(v, axis=-1)
            dn = v / np.maximum(d, 1e-12)[:, None]
            cos_x = np.maximum(np.sum(dn * nm, axis=-1), 0.0)
            val = light.intensity * (cos_x / np.maximum(d * d, 1e-12))[:, None]
            if light.kind == "spot":
                val = val * spot_falloff(light, -dn)[:, None]
            val[d > light.max_distance] = 0.0
            f[m] = val
            dirs[m] = dn
            dist[m] = d
        elif light.kind == "directional":
            dn = -light.direction
            cos_x = np.maximum(nm @ dn, 0.0)
            f[m] = light.irradiance * cos_x[:, None]
            dirs[m] = np.broadcast_to(dn, (int(m.sum()), 3))
        elif light.kind == "area":
            v = point[m] - p
            d = np.linalg.norm(v, axis=-1)
            dn = v / np.maximum(d, 1e-12)[:, None]
            cos_x = np.maximum(np.sum(dn * nm, axis=-1), 0.0)
            cos_y = np.maximum(np.sum(-dn * aux_n[m], axis=-1), 0.0)
            geo = cos_x * cos_y / np.maximum(d * d, 1e-12)
            f[m] = light.radiance * geo[:, None]
            dirs[m] = dn
            dist[m] = d
        elif light.kind == "environment":
            dn = point[m]
            cos_x = np.maximum(np.sum(dn * nm, axis=-1), 0.0)
            L = eval_environment(env, dn) if env is not None else np.zeros((int(m.sum()), 3))
            f[m] = L * cos_x[:, None]
            dirs[m] = dn
    return f, dirs, dist


def target_weight(f, albedo):
    """Resampling target: luminance of the BRDF-weighted integrand."""
    return rel_luminance(albedo / math.pi * f)


# ---------------------------------------------------------------------------
# Reservoirs
# ---------------------------------------------------------------------------


@dataclass
class ReservoirSet:
    """Struct-of-arrays reservoirs, one per shading point."""

    light: np.ndarray  # (N,) int32, -1 = empty
    point: np.ndarray  # (N, 3) sample position, or direction for delta rows
    aux_n: np.ndarray  # (N, 3) area-sample normal
    is_dir: np.ndarray  # (N,) bool
    f: np.ndarray  # (N, 3) integrand at this vertex
    dirs: np.ndarray  # (N, 3)
    dist: np.ndarray  # (N,)
    p_hat: np.ndarray  # (N,)
    w_sum: np.ndarray  # (N,)
    M: np.ndarray  # (N,) float history length

    @staticmethod
    def empty(n):
        return ReservoirSet(
            light=np.full(n, -1, dtype=np.int32),
            point=np.zeros((n, 3)),
            aux_n=np.zeros((n, 3)),
            is_dir=np.zeros(n, dtype=bool),
            f=np.zeros((n, 3)),
            dirs=np.zeros((n, 3)),
            dist=np.full(n, np.inf),
            p_hat=np.zeros(n),
            w_sum=np.zeros(n),
            M=np.zeros(n),
        )

    @property
    def W(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            w = self.w_sum / (self.M * self.p_hat)
        return np.where((self.p_hat > 0.0) & (self.M > 0), w, 0.0)

    def _adopt(self, take, ids, point, aux_n, is_dir, f, dirs, dist, p_hat):
        self.light[take] = ids[take]
        self.point[take] = point[take]
        self.aux_n[take] = aux_n[take]
        self.is_dir[take] = is_dir[take]
        self.f[take] = f[take]
        self.dirs[take] = dirs[take]
        self.dist[take] = dist[take]
        self.p_hat[take] = p_hat[take]


def generate_reservoirs(lights, env, grid, pos, normal, albedo, candidate_count, rng):
    """Weighted reservoir sampling over per-cell candidate lights.

    Light choice is uniform over the cell's list (all lights for empty
    cells), so a candidate's weight is p_hat / (pdf_sample / list_size).
    """
    n = pos.shape[0]
    res = ReservoirSet.empty(n)
    if n == 0 or grid.n_lights == 0:
        return res
    cells = grid.cell_of(pos)
    count = grid.cell_count[cells]
    use_all = count == 0
    list_size = np.where(use_all, grid.n_lights, count).astype(np.float64)

    for _ in range(candidate_count):
        slot = (rng.random(n) * list_size).astype(np.int64)
        slot = np.minimum(slot, (list_size - 1).astype(np.int64))
        ids = np.where(
            use_all,
            slot.astype(np.int32),
            grid.cell_lights[cells, np.minimum(slot, grid.cell_lights.shape[1] - 1)],
        )
        point, aux_n, is_dir, pdf = sample_lights(lights, env, ids, pos, normal, rng)
        f, dirs, dist = eval_samples(lights, env, ids, point, aux_n, is_dir, pos, normal)
        p_hat = target_weight(f, albedo)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(pdf > 0.0, p_hat * list_size / pdf, 0.0)
        res.w_sum += w
        res.M += 1.0
        u = rng.random(n)
        take = (res.w_sum > 0.0) & (u * res.w_sum < w)
        res._adopt(take, ids, point, aux_n, is_dir, f, dirs, dist, p_hat)
    return res


# ---------------------------------------------------------------------------
# Temporal reuse
# ---------------------------------------------------------------------------


@dataclass
class ReservoirHashGrid:
    """Frame-to-frame reservoir store keyed by quantized position and LOD."""

    entries: dict = field(default_factory=dict)

    @staticmethod
    def key_of(pos, lod, base_cell_size):
        cell = base_cell_size * float(2 ** int(lod))
        q = np.floor(np.asarray(pos) / cell).astype(np.int64)
        return (int(q[0]), int(q[1]), int(q[2]), int(lod))

    def store(self, key, light, point, aux_n, is_dir, W, M, normal, p_hat):
        self.entries[key] = (
            int(light),
            np.asarray(point, dtype=np.float64).copy(),
            np.asarray(aux_n, dtype=np.float64).copy(),
            bool(is_dir),
            float(W),
            float(M),
            np.asarray(normal, dtype=np.float64).copy(),
            float(p_hat),
        )

    def store_batch(self, keys, res, W, normal, rng):
        """Insert this frame's reservoirs, merging same-key conflicts.

        Conflicting vertices in one cell stream through a reservoir merge in
        row order (history lengths add, the coin weighs each side's
        w = p_hat * W * M), so the result does not depend on plain
        overwrite order.
        """
        u_all = rng.random(len(keys))
        for i, key in enumerate(keys):
            if res.light[i] < 0:
                continue
            new = (
                int(res.light[i]),
                res.point[i].copy(),
                res.aux_n[i].copy(),
                bool(res.is_dir[i]),
                float(W[i]),
                float(res.M[i]),
                normal[i].copy(),
                float(res.p_hat[i]),
            )
            old = self.entries.get(key)
            if old is None:
                self.entries[key] = new
                continue
            w_old = old[7] * old[4] * old[5]
            w_new = new[7] * new[4] * new[5]
            M_tot = old[5] + new[5]
            w_tot = w_old + w_new
            if w_tot <= 0.0:
                self.entries[key] = old[:5] + (M_tot,) + old[6:]
                continue
            win = new if u_all[i] * w_tot < w_new else old
            W_merged = w_tot / (M_tot * win[7]) if win[7] > 0.0 else 0.0
            self.entries[key] = (
                win[0],
                win[1],
                win[2],
                win[3],
                W_merged,
                M_tot,
                win[6],
                win[7],
            )

    def lookup(self, key):
        return self.entries.get(key)


def temporal_reuse(res, prev_hash, keys, pos, normal, albedo, lights, env, rng, m_cap=20.0, normal_min=0.9):
    """Merge last frame's reservoir at each vertex's cell into this frame's.

    The stored sample is re-evaluated at the current vertex; its history
    length is clamped to m_cap times the current count so stale selections
    cannot dominate. The stored normal gates reuse across geometric edges.
    """
    if prev_hash is None or not prev_hash.entries:
        return res
    n = res.light.shape[0]
    u_all = rng.random(n)

    prev_ids = np.full(n, -1, dtype=np.int32)
    prev_point = np.zeros((n, 3))
    prev_aux = np.zeros((n, 3))
    prev_isdir = np.zeros(n, dtype=bool)
    prev_W = np.zeros(n)
    prev_M = np.zeros(n)
    for i, key in enumerate(keys):
        hit = prev_hash.lookup(key)
        if hit is None:
            continue
        light, point, aux_n, is_dir, W, M, nrm, _ = hit
        if light < 0 or W <= 0.0 or float(nrm @ normal[i]) < normal_min:
            continue
        prev_ids[i] = light
        prev_point[i] = point
        prev_aux[i] = aux_n
        prev_isdir[i] = is_dir
        prev_W[i] = W
        prev_M[i] = M

    has = prev_ids >= 0
    if not np.any(has):
        return res
    f, dirs, dist = eval_samples(lights, env, prev_ids, prev_point, prev_aux, prev_isdir, pos, normal)
    p_hat = target_weight(f, albedo)
    M_use = np.minimum(prev_M, m_cap * np.maximum(res.M, 1.0))
    w = np.where(has, p_hat * prev_W * M_use, 0.0)

    res.w_sum += w
    res.M += np.where(has, M_use, 0.0)
    take = has & (res.w_sum > 0.0) & (u_all * res.w_sum < w)
    res._adopt(take, prev_ids, prev_point, prev_aux, prev_isdir, f, dirs, dist, p_hat)
    return res


def resolve_reservoirs(res, geom, pos, normal, eps):
    """Spend one shadow ray per reservoir; returns the irradiance estimate
    f * W * visibility per row (zeros for empty reservoirs)."""
    from .core import trace_shadow

    n = res.light.shape[0]
    out = np.zeros((n, 3))
    live = (res.light >= 0) & (res.p_hat > 0.0)
    if not np.any(live):
        return out, np.zeros(n, dtype=bool)
    origins = pos[live] + normal[live] * eps
    dirs = res.dirs[live]
    tmax = np.where(np.isfinite(res.dist[live]), res.dist[live] - 2.0 * eps, 1e30)
    occluded = trace_shadow(geom, origins, dirs, tmax)
    W = res.W[live]
    out[live] = res.f[live] * (W * ~occluded)[:, None]
    return out, live
