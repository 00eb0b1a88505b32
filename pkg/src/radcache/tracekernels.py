"""Numba kernels for ray traversal plus the counter-based RNG used inside them.

All geometry math is float64. The triangle test is the watertight
scaled-barycentric formulation, shared verbatim between the BVH path and the
brute-force oracle so the two are bit-identical; ties at equal t resolve to the
lowest primitive id in both.

The integer hashes mirror mathutils (uint32 semantics emulated on uint64);
tests assert the two implementations agree bit for bit.
"""

from __future__ import annotations

import numpy as np
from numba import njit

U32MASK = np.uint64(0xFFFFFFFF)


@njit(cache=True, inline="always")
def lowbias32(x):
    x = np.uint64(x) & U32MASK
    x ^= x >> np.uint64(16)
    x = (x * np.uint64(0x7FEB352D)) & U32MASK
    x ^= x >> np.uint64(15)
    x = (x * np.uint64(0x846CA68B)) & U32MASK
    x ^= x >> np.uint64(16)
    return x


@njit(cache=True, inline="always")
def fmix32(x):
    x = np.uint64(x) & U32MASK
    x ^= x >> np.uint64(16)
    x = (x * np.uint64(0x85EBCA6B)) & U32MASK
    x ^= x >> np.uint64(13)
    x = (x * np.uint64(0xC2B2AE35)) & U32MASK
    x ^= x >> np.uint64(16)
    return x


@njit(cache=True, inline="always")
def hash_fold(h, w):
    return lowbias32(h ^ (np.uint64(w) & U32MASK))


@njit(cache=True, inline="always")
def u01_from(seed, a, b, c):
    """Uniform [0,1) from a 4-word counter; no state, safe anywhere."""
    h = hash_fold(np.uint64(seed), np.uint64(a))
    h = hash_fold(h, np.uint64(b))
    h = hash_fold(h, np.uint64(c))
    return np.float64(h) / 4294967296.0


@njit(cache=True, inline="always")
def _tri_hit(verts, tri, ox, oy, oz, kx, ky, kz, sx, sy, sz, tmin, tmax):
    """Watertight ray/triangle. Returns (t, u, v) with t = inf on miss."""
    ax = verts[tri, 0, 0] - ox
    ay = verts[tri, 0, 1] - oy
    az = verts[tri, 0, 2] - oz
    bx = verts[tri, 1, 0] - ox
    by = verts[tri, 1, 1] - oy
    bz = verts[tri, 1, 2] - oz
    cx = verts[tri, 2, 0] - ox
    cy = verts[tri, 2, 1] - oy
    cz = verts[tri, 2, 2] - oz

    if kz == 0:
        akz, bkz, ckz = ax, bx, cx
    elif kz == 1:
        akz, bkz, ckz = ay, by, cy
    else:
        akz, bkz, ckz = az, bz, cz
    if kx == 0:
        akx, bkx, ckx = ax, bx, cx
    elif kx == 1:
        akx, bkx, ckx = ay, by, cy
    else:
        akx, bkx, ckx = az, bz, cz
    if ky == 0:
        aky, bky, cky = ax, bx, cx
    elif ky == 1:
        aky, bky, cky = ay, by, cy
    else:
        aky, bky, cky = az, bz, cz

    axs = akx - sx * akz
    ays = aky - sy * akz
    bxs = bkx - sx * bkz
    bys = bky - sy * bkz
    cxs = ckx - sx * ckz
    cys = cky - sy * ckz

    u = cxs * bys - cys * bxs
    v = axs * cys - ays * cxs
    w = bxs * ays - bys * axs

    if (u < 0.0 or v < 0.0 or w < 0.0) and (u > 0.0 or v > 0.0 or w > 0.0):
        return np.inf, 0.0, 0.0
    det = u + v + w
    if det == 0.0:
        return np.inf, 0.0, 0.0
    t = (u * (sz * akz) + v * (sz * bkz) + w * (sz * ckz)) / det
    if t <= tmin or t > tmax:
        return np.inf, 0.0, 0.0
    # scaled (u, v, w) weight vertices (0, 1, 2); report weights of vertices
    # 1 and 2 so pos = v0*(1-u-v) + v1*u + v2*v holds for callers
    return t, v / det, w / det


@njit(cache=True, inline="always")
def _ray_setup(dx, dy, dz):
    adx = abs(dx)
    ady = abs(dy)
    adz = abs(dz)
    if adx >= ady and adx >= adz:
        kz = 0
    elif ady >= adz:
        kz = 1
    else:
        kz = 2
    kx = kz + 1
    if kx == 3:
        kx = 0
    ky = kx + 1
    if ky == 3:
        ky = 0
    if kz == 0:
        dkz = dx
    elif kz == 1:
        dkz = dy
    else:
        dkz = dz
    if dkz < 0.0:
        kx, ky = ky, kx
    if kx == 0:
        dkx = dx
    elif kx == 1:
        dkx = dy
    else:
        dkx = dz
    if ky == 0:
        dky = dx
    elif ky == 1:
        dky = dy
    else:
        dky = dz
    if kz == 0:
        dkz = dx
    elif kz == 1:
        dkz = dy
    else:
        dkz = dz
    sx = dkx / dkz
    sy = dky / dkz
    sz = 1.0 / dkz
    return kx, ky, kz, sx, sy, sz


@njit(cache=True, inline="always")
def _aabb_hit(bmin, bmax, node, ox, oy, oz, idx, idy, idz, tmax):
    tx1 = (bmin[node, 0] - ox) * idx
    tx2 = (bmax[node, 0] - ox) * idx
    tlo = min(tx1, tx2)
    thi = max(tx1, tx2)
    ty1 = (bmin[node, 1] - oy) * idy
    ty2 = (bmax[node, 1] - oy) * idy
    tlo = max(tlo, min(ty1, ty2))
    thi = min(thi, max(ty1, ty2))
    tz1 = (bmin[node, 2] - oz) * idz
    tz2 = (bmax[node, 2] - oz) * idz
    tlo = max(tlo, min(tz1, tz2))
    thi = min(thi, max(tz1, tz2))
    if thi >= tlo and tlo <= tmax and thi >= 0.0:
        return tlo
    return np.inf


@njit(cache=True)
def bvh_closest(bmin, bmax, meta, pidx, verts, ox, oy, oz, dx, dy, dz, tmin, tmax):
    """Closest hit: (t, prim, u, v); prim = -1 on miss.

    Lexicographic (t, prim) minimum, so the result does not depend on
    traversal order and matches the brute-force scan exactly.
    """
    kx, ky, kz, sx, sy, sz = _ray_setup(dx, dy, dz)
    idx = 1.0 / dx if dx != 0.0 else np.inf
    idy = 1.0 / dy if dy != 0.0 else np.inf
    idz = 1.0 / dz if dz != 0.0 else np.inf

    best_t = tmax
    best_prim = -1
    best_u = 0.0
    best_v = 0.0

    stack = np.empty(64, dtype=np.int32)
    sp = 0
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _aabb_hit(bmin, bmax, node, ox, oy, oz, idx, idy, idz, best_t) == np.inf:
            continue
        count = meta[node, 1]
        if count > 0:
            first = meta[node, 0]
            for k in range(count):
                tri = pidx[first + k]
                t, u, v = _tri_hit(verts, tri, ox, oy, oz, kx, ky, kz, sx, sy, sz, tmin, best_t)
                if t == np.inf:
                    continue
                if t < best_t or best_prim < 0 or tri < best_prim:
                    best_t = t
                    best_prim = tri
                    best_u = u
                    best_v = v
        else:
            left = meta[node, 0]
            tl = _aabb_hit(bmin, bmax, left, ox, oy, oz, idx, idy, idz, best_t)
            tr = _aabb_hit(bmin, bmax, left + 1, ox, oy, oz, idx, idy, idz, best_t)
            if tl <= tr:
                if tr != np.inf:
                    stack[sp] = left + 1
                    sp += 1
                if tl != np.inf:
                    stack[sp] = left
                    sp += 1
            else:
                if tl != np.inf:
                    stack[sp] = left
                    sp += 1
                stack[sp] = left + 1
                sp += 1
    if best_prim < 0:
        return np.inf, -1, 0.0, 0.0
    return best_t, best_prim, best_u, best_v


@njit(cache=True)
def brute_closest(verts, ox, oy, oz, dx, dy, dz, tmin, tmax):
    """Oracle: scan every triangle in id order with the same hit test."""
    kx, ky, kz, sx, sy, sz = _ray_setup(dx, dy, dz)
    best_t = np.inf
    best_prim = -1
    best_u = 0.0
    best_v = 0.0
    for tri in range(verts.shape[0]):
        t, u, v = _tri_hit(verts, tri, ox, oy, oz, kx, ky, kz, sx, sy, sz, tmin, tmax)
        if t < best_t:
            best_t = t
            best_prim = tri
            best_u = u
            best_v = v
    if best_prim < 0 or best_t >= tmax:
        return np.inf, -1, 0.0, 0.0
    return best_t, best_prim, best_u, best_v


@njit(cache=True)
def bvh_occluded(bmin, bmax, meta, pidx, verts, ox, oy, oz, dx, dy, dz, tmin, tmax):
    """Any-hit in (tmin, tmax); early exit."""
    kx, ky, kz, sx, sy, sz = _ray_setup(dx, dy, dz)
    idx = 1.0 / dx if dx != 0.0 else np.inf
    idy = 1.0 / dy if dy != 0.0 else np.inf
    idz = 1.0 / dz if dz != 0.0 else np.inf
    stack = np.empty(64, dtype=np.int32)
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _aabb_hit(bmin, bmax, node, ox, oy, oz, idx, idy, idz, tmax) == np.inf:
            continue
        count = meta[node, 1]
        if count > 0:
            first = meta[node, 0]
            for k in range(count):
                tri = pidx[first + k]
                t, _, _ = _tri_hit(verts, tri, ox, oy, oz, kx, ky, kz, sx, sy, sz, tmin, tmax)
                if t != np.inf:
                    return True
        else:
            left = meta[node, 0]
            stack[sp] = left
            sp += 1
            stack[sp] = left + 1
            sp += 1
    return False


@njit(cache=True)
def closest_batch(bmin, bmax, meta, pidx, verts, origins, dirs, tmin, tmax, t_out, prim_out, u_out, v_out):
    for i in range(origins.shape[0]):
        t, p, u, v = bvh_closest(
            bmin, bmax, meta, pidx, verts,
            origins[i, 0], origins[i, 1], origins[i, 2],
            dirs[i, 0], dirs[i, 1], dirs[i, 2], tmin, tmax[i],
        )
        t_out[i] = t
        prim_out[i] = p
        u_out[i] = u
        v_out[i] = v


@njit(cache=True)
def brute_batch(verts, origins, dirs, tmin, tmax, t_out, prim_out, u_out, v_out):
    for i in range(origins.shape[0]):
        t, p, u, v = brute_closest(
            verts,
            origins[i, 0], origins[i, 1], origins[i, 2],
            dirs[i, 0], dirs[i, 1], dirs[i, 2], tmin, tmax[i],
        )
        t_out[i] = t
        prim_out[i] = p
        u_out[i] = u
        v_out[i] = v


@njit(cache=True)
def occluded_batch(bmin, bmax, meta, pidx, verts, origins, dirs, tmin, tmax, out):
    for i in range(origins.shape[0]):
        out[i] = bvh_occluded(
            bmin, bmax, meta, pidx, verts,
            origins[i, 0], origins[i, 1], origins[i, 2],
            dirs[i, 0], dirs[i, 1], dirs[i, 2], tmin, tmax[i],
        )
