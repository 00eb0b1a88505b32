"""BVH construction and the ray queries used across the pipeline.

The builder is a deterministic median split over centroid order (stable sort,
largest-extent axis). Traversal results are pinned to the brute-force scan:
lexicographic (t, primitive id) minimum, equal-t ties to the lowest id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tracekernels as tk


@dataclass
class BVH:
    bounds_min: np.ndarray  # (N, 3)
    bounds_max: np.ndarray  # (N, 3)
    meta: np.ndarray  # (N, 2) int32: inner -> [left_child, 0], leaf -> [first, count]
    prim_index: np.ndarray  # (T,) int32 permutation into the triangle soup

    @property
    def node_count(self):
        return self.bounds_min.shape[0]


LEAF_SIZE = 4


def build_bvh(tri_verts, leaf_size=LEAF_SIZE):
    """Median-split BVH for a (T, 3, 3) triangle soup."""
    tri_verts = np.asarray(tri_verts, dtype=np.float64)
    T = tri_verts.shape[0]
    if T == 0:
        raise ValueError("empty triangle soup")
    cent = tri_verts.mean(axis=1)
    tri_lo = tri_verts.min(axis=1)
    tri_hi = tri_verts.max(axis=1)

    order = np.arange(T, dtype=np.int32)
    bounds_min = []
    bounds_max = []
    meta = []

    def emit(lo, hi, m0, m1):
        bounds_min.append(lo)
        bounds_max.append(hi)
        meta.append((m0, m1))
        return len(meta) - 1

    # Iterative build; work items are (node slot, start, end) over `order`.
    root = emit(np.zeros(3), np.zeros(3), 0, 0)
    stack = [(root, 0, T)]
    while stack:
        slot, start, end = stack.pop()
        idx = order[start:end]
        lo = tri_lo[idx].min(axis=0)
        hi = tri_hi[idx].max(axis=0)
        bounds_min[slot] = lo
        bounds_max[slot] = hi
        n = end - start
        if n <= leaf_size:
            meta[slot] = (start, n)
            continue
        axis = int(np.argmax(hi - lo))
        key = cent[idx, axis]
        local = np.argsort(key, kind="stable")
        order[start:end] = idx[local]
        mid = start + n // 2
        left = emit(np.zeros(3), np.zeros(3), 0, 0)
        emit(np.zeros(3), np.zeros(3), 0, 0)  # right child is left + 1
        meta[slot] = (left, 0)
        # push right first so the left child is processed next (cache locality)
        stack.append((left + 1, mid, end))
        stack.append((left, start, mid))

    return BVH(
        bounds_min=np.ascontiguousarray(bounds_min, dtype=np.float64),
        bounds_max=np.ascontiguousarray(bounds_max, dtype=np.float64),
        meta=np.ascontiguousarray(meta, dtype=np.int32),
        prim_index=np.ascontiguousarray(order, dtype=np.int32),
    )


def ensure_bvh(geom):
    if geom.bvh is None:
        geom.bvh = build_bvh(geom.tri_verts)
    return geom.bvh


def _as_ray_arrays(origins, dirs, tmax, n=None):
    origins = np.ascontiguousarray(np.atleast_2d(origins), dtype=np.float64)
    dirs = np.ascontiguousarray(np.atleast_2d(dirs), dtype=np.float64)
    count = n if n is not None else max(origins.shape[0], dirs.shape[0])
    if origins.shape[0] == 1 and count > 1:
        origins = np.repeat(origins, count, axis=0)
    if dirs.shape[0] == 1 and count > 1:
        dirs = np.repeat(dirs, count, axis=0)
    tmax_arr = np.broadcast_to(np.asarray(tmax, dtype=np.float64), (origins.shape[0],))
    return origins, dirs, np.ascontiguousarray(tmax_arr)


def trace_closest(geom, origins, dirs, tmin=1e-9, tmax=np.inf):
    """Closest hits for a batch of rays.

    Returns dict with t (inf on miss), prim (-1 on miss), u, v, hit.
    """
    bvh = ensure_bvh(geom)
    origins, dirs, tmax_arr = _as_ray_arrays(origins, dirs, tmax)
    n = origins.shape[0]
    t = np.empty(n)
    prim = np.empty(n, dtype=np.int32)
    u = np.empty(n)
    v = np.empty(n)
    tk.closest_batch(
        bvh.bounds_min, bvh.bounds_max, bvh.meta, bvh.prim_index,
        geom.tri_verts, origins, dirs, tmin, tmax_arr, t, prim, u, v,
    )
    return {"t": t, "prim": prim, "u": u, "v": v, "hit": prim >= 0}


def trace_closest_brute(geom, origins, dirs, tmin=1e-9, tmax=np.inf):
    """Reference scan over all triangles; oracle for trace_closest."""
    origins, dirs, tmax_arr = _as_ray_arrays(origins, dirs, tmax)
    n = origins.shape[0]
    t = np.empty(n)
    prim = np.empty(n, dtype=np.int32)
    u = np.empty(n)
    v = np.empty(n)
    tk.brute_batch(geom.tri_verts, origins, dirs, tmin, tmax_arr, t, prim, u, v)
    return {"t": t, "prim": prim, "u": u, "v": v, "hit": prim >= 0}


def trace_shadow(geom, origins, dirs, tmax, tmin=1e-9):
    """True where the segment (tmin, tmax] is occluded."""
    bvh = ensure_bvh(geom)
    origins, dirs, tmax_arr = _as_ray_arrays(origins, dirs, tmax)
    out = np.zeros(origins.shape[0], dtype=np.bool_)
    tk.occluded_batch(
        bvh.bounds_min, bvh.bounds_max, bvh.meta, bvh.prim_index,
        geom.tri_verts, origins, dirs, tmin, tmax_arr, out,
    )
    return out


def interpolate_hit(geom, prim, u, v):
    """Positions and unit shading normals at (prim, u, v) barycentrics."""
    prim = np.asarray(prim)
    u = np.asarray(u)[..., None]
    v = np.asarray(v)[..., None]
    w = 1.0 - u - v
    verts = geom.tri_verts[prim]
    pos = verts[..., 0, :] * w + verts[..., 1, :] * u + verts[..., 2, :] * v
    nrm = geom.tri_normals[prim]
    n = nrm[..., 0, :] * w + nrm[..., 1, :] * u + nrm[..., 2, :] * v
    ln = np.linalg.norm(n, axis=-1, keepdims=True)
    n = n / np.where(ln > 0.0, ln, 1.0)
    return pos, n
