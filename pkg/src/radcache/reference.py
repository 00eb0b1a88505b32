"""Brute-force path-traced reference renderer.

Lambertian-only unidirectional path tracing with next-event estimation for
every finite or directional light; the environment contributes through
cosine-sampled continuation rays that escape. Surface emission is added only
at primary hits, since deeper vertices already receive emitter energy via
NEE (scenes pair emissive geometry with a matching area light).

Sampling uses a counter-based hash RNG keyed on (seed, pixel, sample,
dimension), so results are deterministic and independent of scheduling.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .core import ensure_bvh
from .tracekernels import bvh_closest, bvh_occluded, u01_from

KIND_POINT = 0
KIND_SPOT = 1
KIND_DIRECTIONAL = 2
KIND_AREA = 3

MAX_BOUNCES = 8
RR_START = 4
EPS_SCALE = 1e-4


def _pack_lights(scene):
    """Flatten NEE-able lights into numba-friendly arrays."""
    kinds = []
    data = []  # 16 floats per light, layout per kind
    tri_blocks = []
    tri_rad = []
    tri_cum = []
    tri_range = []
    for light in scene.lights:
        if light.kind == "environment":
            continue
        row = np.zeros(16)
        if light.kind in ("point", "spot"):
            row[0:3] = light.position
            row[3:6] = light.intensity
            row[6] = light.max_distance
            if light.kind == "spot":
                row[7:10] = light.direction
                row[10] = light.cos_inner
                row[11] = light.cos_outer
                kinds.append(KIND_SPOT)
            else:
                kinds.append(KIND_POINT)
            tri_range.append((0, 0))
        elif light.kind == "directional":
            row[0:3] = light.direction
            row[3:6] = light.irradiance
            kinds.append(KIND_DIRECTIONAL)
            tri_range.append((0, 0))
        elif light.kind == "area":
            start = sum(b.shape[0] for b in tri_blocks)
            tri_blocks.append(light.triangles)
            tri_rad.append(np.tile(light.radiance, (light.triangles.shape[0], 1)))
            cum = np.cumsum(light.areas) / light.total_area
            tri_cum.append(cum)
            tri_range.append((start, start + light.triangles.shape[0]))
            row[0] = light.total_area
            kinds.append(KIND_AREA)
        data.append(row)
    n = len(kinds)
    kinds = np.asarray(kinds, dtype=np.int64) if n else np.zeros(0, dtype=np.int64)
    data = np.asarray(data) if n else np.zeros((0, 16))
    tri_range = np.asarray(tri_range, dtype=np.int64) if n else np.zeros((0, 2), dtype=np.int64)
    if tri_blocks:
        tris = np.concatenate(tri_blocks, axis=0)
        rads = np.concatenate(tri_rad, axis=0)
        cums = np.concatenate(tri_cum, axis=0)
    else:
        tris = np.zeros((0, 3, 3))
        rads = np.zeros((0, 3))
        cums = np.zeros(0)
    return kinds, data, tri_range, tris, rads, cums


def _pack_environment(scene):
    env = scene.environment
    if env is None:
        return 0, np.zeros((1, 1, 3))
    if env.kind == "constant":
        return 1, np.asarray(env.radiance, dtype=np.float64).reshape(1, 1, 3)
    return 2, np.asarray(env.image, dtype=np.float64)


@njit(cache=True, inline="always")
def _env_eval(env_kind, env_img, dx, dy, dz):
    if env_kind == 0:
        return 0.0, 0.0, 0.0
    if env_kind == 1:
        return env_img[0, 0, 0], env_img[0, 0, 1], env_img[0, 0, 2]
    # latitude-longitude map: v = acos(y)/pi, u = atan2(x, -z)/2pi + 0.5
    h, w = env_img.shape[0], env_img.shape[1]
    y = min(max(dy, -1.0), 1.0)
    v = math.acos(y) / math.pi
    u = math.atan2(dx, -dz) / (2.0 * math.pi) + 0.5
    fx = u * w - 0.5
    fy = v * h - 0.5
    x0 = int(math.floor(fx))
    y0 = int(math.floor(fy))
    tx = fx - x0
    ty = fy - y0
    x1 = (x0 + 1) % w
    x0 = x0 % w
    y0 = min(max(y0, 0), h - 1)
    y1 = min(y0 + 1, h - 1)
    r = (
        env_img[y0, x0, 0] * (1 - tx) * (1 - ty)
        + env_img[y0, x1, 0] * tx * (1 - ty)
        + env_img[y1, x0, 0] * (1 - tx) * ty
        + env_img[y1, x1, 0] * tx * ty
    )
    g = (
        env_img[y0, x0, 1] * (1 - tx) * (1 - ty)
        + env_img[y0, x1, 1] * tx * (1 - ty)
        + env_img[y1, x0, 1] * (1 - tx) * ty
        + env_img[y1, x1, 1] * tx * ty
    )
    b = (
        env_img[y0, x0, 2] * (1 - tx) * (1 - ty)
        + env_img[y0, x1, 2] * tx * (1 - ty)
        + env_img[y1, x0, 2] * (1 - tx) * ty
        + env_img[y1, x1, 2] * tx * ty
    )
    return r, g, b


@njit(cache=True, inline="always")
def _cosine_dir(nx, ny, nz, u1, u2):
    """Cosine-weighted direction about the normal (branchless frame)."""
    sign = 1.0 if nz >= 0.0 else -1.0
    a = -1.0 / (sign + nz)
    b = nx * ny * a
    tx, ty, tz = 1.0 + sign * nx * nx * a, sign * b, -sign * nx
    bx, by, bz = b, sign + ny * ny * a, -ny
    r = math.sqrt(u1)
    phi = 2.0 * math.pi * u2
    lx = r * math.cos(phi)
    ly = r * math.sin(phi)
    lz = math.sqrt(max(1.0 - u1, 0.0))
    return (
        tx * lx + bx * ly + nx * lz,
        ty * lx + by * ly + ny * lz,
        tz * lx + bz * ly + nz * lz,
    )


@njit(cache=True)
def _trace_image(
    bmin,
    bmax,
    meta,
    pidx,
    verts,
    tri_normals,
    tri_albedo,
    tri_emissive,
    cam_pos,
    cam_rot,  # rows: right, up, back
    tan_half,
    aspect,
    width,
    height,
    spp,
    seed,
    l_kinds,
    l_data,
    l_trirange,
    l_tris,
    l_trirad,
    l_tricum,
    env_kind,
    env_img,
    eps,
    aa,
    out,
):
    n_lights = l_kinds.shape[0]
    for pix in range(width * height):
        px = pix % width
        py = pix // width
        acc_r = 0.0
        acc_g = 0.0
        acc_b = 0.0
        for s in range(spp):
            dim = 0
            # aa=0 samples pixel centers so silhouettes align with the
            # point-sampled geometry buffers of the probe pipeline
            if aa != 0:
                jx = u01_from(seed, pix, s, dim)
                jy = u01_from(seed, pix, s, dim + 1)
            else:
                jx = 0.5
                jy = 0.5
            dim += 2
            sx = (2.0 * (px + jx) / width - 1.0) * tan_half * aspect
            sy = (1.0 - 2.0 * (py + jy) / height) * tan_half
            dx = sx * cam_rot[0, 0] + sy * cam_rot[1, 0] - cam_rot[2, 0]
            dy = sx * cam_rot[0, 1] + sy * cam_rot[1, 1] - cam_rot[2, 1]
            dz = sx * cam_rot[0, 2] + sy * cam_rot[1, 2] - cam_rot[2, 2]
            dl = math.sqrt(dx * dx + dy * dy + dz * dz)
            dx /= dl
            dy /= dl
            dz /= dl
            ox, oy, oz = cam_pos[0], cam_pos[1], cam_pos[2]

            beta_r = 1.0
            beta_g = 1.0
            beta_b = 1.0
            for depth in range(MAX_BOUNCES + 1):
                t, prim, bu, bv = bvh_closest(
                    bmin, bmax, meta, pidx, verts, ox, oy, oz, dx, dy, dz, 1e-9, np.inf
                )
                if prim < 0:
                    er, eg, eb = _env_eval(env_kind, env_img, dx, dy, dz)
                    acc_r += beta_r * er
                    acc_g += beta_g * eg
                    acc_b += beta_b * eb
                    break
                hx = ox + dx * t
                hy = oy + dy * t
                hz = oz + dz * t
                w0 = 1.0 - bu - bv
                nx = (
                    w0 * tri_normals[prim, 0, 0]
                    + bu * tri_normals[prim, 1, 0]
                    + bv * tri_normals[prim, 2, 0]
                )
                ny = (
                    w0 * tri_normals[prim, 0, 1]
                    + bu * tri_normals[prim, 1, 1]
                    + bv * tri_normals[prim, 2, 1]
                )
                nz = (
                    w0 * tri_normals[prim, 0, 2]
                    + bu * tri_normals[prim, 1, 2]
                    + bv * tri_normals[prim, 2, 2]
                )
                nl = math.sqrt(nx * nx + ny * ny + nz * nz)
                if nl > 0.0:
                    nx /= nl
                    ny /= nl
                    nz /= nl
                if nx * dx + ny * dy + nz * dz > 0.0:
                    nx = -nx
                    ny = -ny
                    nz = -nz
                if depth == 0:
                    acc_r += beta_r * tri_emissive[prim, 0]
                    acc_g += beta_g * tri_emissive[prim, 1]
                    acc_b += beta_b * tri_emissive[prim, 2]

                ar = tri_albedo[prim, 0]
                ag = tri_albedo[prim, 1]
                ab = tri_albedo[prim, 2]

                # next-event estimation over the packed light list
                if n_lights > 0:
                    ul = u01_from(seed, pix, s, dim)
                    dim += 1
                    li = int(ul * n_lights)
                    if li >= n_lights:
                        li = n_lights - 1
                    fr = 0.0
                    fg = 0.0
                    fb = 0.0
                    ldx = 0.0
                    ldy = 0.0
                    ldz = 0.0
                    ldist = np.inf
                    kind = l_kinds[li]
                    if kind == KIND_AREA:
                        u1 = u01_from(seed, pix, s, dim)
                        u2 = u01_from(seed, pix, s, dim + 1)
                        u3 = u01_from(seed, pix, s, dim + 2)
                        dim += 3
                        lo = l_trirange[li, 0]
                        hi = l_trirange[li, 1]
                        tri = lo
                        for k in range(lo, hi):
                            if u1 <= l_tricum[k]:
                                tri = k
                                break
                            tri = k
                        su = math.sqrt(u2)
                        b0 = 1.0 - su
                        b1 = su * (1.0 - u3)
                        b2 = su * u3
                        yx = (
                            b0 * l_tris[tri, 0, 0]
                            + b1 * l_tris[tri, 1, 0]
                            + b2 * l_tris[tri, 2, 0]
                        )
                        yy = (
                            b0 * l_tris[tri, 0, 1]
                            + b1 * l_tris[tri, 1, 1]
                            + b2 * l_tris[tri, 2, 1]
                        )
                        yz = (
                            b0 * l_tris[tri, 0, 2]
                            + b1 * l_tris[tri, 1, 2]
                            + b2 * l_tris[tri, 2, 2]
                        )
                        e1x = l_tris[tri, 1, 0] - l_tris[tri, 0, 0]
                        e1y = l_tris[tri, 1, 1] - l_tris[tri, 0, 1]
                        e1z = l_tris[tri, 1, 2] - l_tris[tri, 0, 2]
                        e2x = l_tris[tri, 2, 0] - l_tris[tri, 0, 0]
                        e2y = l_tris[tri, 2, 1] - l_tris[tri, 0, 1]
                        e2z = l_tris[tri, 2, 2] - l_tris[tri, 0, 2]
                        lnx = e1y * e2z - e1z * e2y
                        lny = e1z * e2x - e1x * e2z
                        lnz = e1x * e2y - e1y * e2x
                        lnl = math.sqrt(lnx * lnx + lny * lny + lnz * lnz)
                        if lnl > 0.0:
                            lnx /= lnl
                            lny /= lnl
                            lnz /= lnl
                        vx = yx - hx
                        vy = yy - hy
                        vz = yz - hz
                        d = math.sqrt(vx * vx + vy * vy + vz * vz)
                        if d > 1e-12:
                            ldx = vx / d
                            ldy = vy / d
                            ldz = vz / d
                            ldist = d
                            cos_x = max(ldx * nx + ldy * ny + ldz * nz, 0.0)
                            cos_y = max(-(ldx * lnx + ldy * lny + ldz * lnz), 0.0)
                            geo = cos_x * cos_y / (d * d) * l_data[li, 0]
                            fr = l_trirad[tri, 0] * geo
                            fg = l_trirad[tri, 1] * geo
                            fb = l_trirad[tri, 2] * geo
                    elif kind == KIND_DIRECTIONAL:
                        ldx = -l_data[li, 0]
                        ldy = -l_data[li, 1]
                        ldz = -l_data[li, 2]
                        cos_x = max(ldx * nx + ldy * ny + ldz * nz, 0.0)
                        fr = l_data[li, 3] * cos_x
                        fg = l_data[li, 4] * cos_x
                        fb = l_data[li, 5] * cos_x
                    else:  # point or spot
                        vx = l_data[li, 0] - hx
                        vy = l_data[li, 1] - hy
                        vz = l_data[li, 2] - hz
                        d = math.sqrt(vx * vx + vy * vy + vz * vz)
                        if d > 1e-12 and d <= l_data[li, 6]:
                            ldx = vx / d
                            ldy = vy / d
                            ldz = vz / d
                            ldist = d
                            cos_x = max(ldx * nx + ldy * ny + ldz * nz, 0.0)
                            sc = cos_x / (d * d)
                            if kind == KIND_SPOT:
                                cosg = -(
                                    ldx * l_data[li, 7]
                                    + ldy * l_data[li, 8]
                                    + ldz * l_data[li, 9]
                                )
                                den = max(l_data[li, 10] - l_data[li, 11], 1e-9)
                                tt = min(max((cosg - l_data[li, 11]) / den, 0.0), 1.0)
                                sc *= tt * tt
                            fr = l_data[li, 3] * sc
                            fg = l_data[li, 4] * sc
                            fb = l_data[li, 5] * sc
                    if fr > 0.0 or fg > 0.0 or fb > 0.0:
                        sox = hx + nx * eps
                        soy = hy + ny * eps
                        soz = hz + nz * eps
                        tmax = ldist - 2.0 * eps if ldist != np.inf else 1e30
                        if not bvh_occluded(
                            bmin, bmax, meta, pidx, verts, sox, soy, soz, ldx, ldy, ldz, 1e-9, tmax
                        ):
                            inv_pdf = float(n_lights)
                            acc_r += beta_r * (ar / math.pi) * fr * inv_pdf
                            acc_g += beta_g * (ag / math.pi) * fg * inv_pdf
                            acc_b += beta_b * (ab / math.pi) * fb * inv_pdf

                # continuation: cosine-sampled, throughput *= albedo
                beta_r *= ar
                beta_g *= ag
                beta_b *= ab
                if depth >= RR_START:
                    q = max(beta_r, max(beta_g, beta_b))
                    q = min(max(q, 0.05), 0.95)
                    if u01_from(seed, pix, s, dim) >= q:
                        dim += 1
                        break
                    dim += 1
                    beta_r /= q
                    beta_g /= q
                    beta_b /= q
                u1 = u01_from(seed, pix, s, dim)
                u2 = u01_from(seed, pix, s, dim + 1)
                dim += 2
                dx, dy, dz = _cosine_dir(nx, ny, nz, u1, u2)
                ox = hx + nx * eps
                oy = hy + ny * eps
                oz = hz + nz * eps
        out[py, px, 0] = acc_r / spp
        out[py, px, 1] = acc_g / spp
        out[py, px, 2] = acc_b / spp


@njit(cache=True)
def _trace_rays(
    bmin,
    bmax,
    meta,
    pidx,
    verts,
    tri_normals,
    tri_albedo,
    tri_emissive,
    origins,
    directions,
    spp,
    seed,
    l_kinds,
    l_data,
    l_trirange,
    l_tris,
    l_trirad,
    l_tricum,
    env_kind,
    env_img,
    eps,
    out,
):
    """Incident radiance along arbitrary rays (emission counted at the first
    hit); same estimator as the image kernel, indexed by ray instead of pixel."""
    n_lights = l_kinds.shape[0]
    n_rays = origins.shape[0]
    for ray in range(n_rays):
        acc_r = 0.0
        acc_g = 0.0
        acc_b = 0.0
        for s in range(spp):
            dim = 0
            ox, oy, oz = origins[ray, 0], origins[ray, 1], origins[ray, 2]
            dx, dy, dz = directions[ray, 0], directions[ray, 1], directions[ray, 2]
            beta_r = 1.0
            beta_g = 1.0
            beta_b = 1.0
            for depth in range(MAX_BOUNCES + 1):
                t, prim, bu, bv = bvh_closest(
                    bmin, bmax, meta, pidx, verts, ox, oy, oz, dx, dy, dz, 1e-9, np.inf
                )
                if prim < 0:
                    er, eg, eb = _env_eval(env_kind, env_img, dx, dy, dz)
                    acc_r += beta_r * er
                    acc_g += beta_g * eg
                    acc_b += beta_b * eb
                    break
                hx = ox + dx * t
                hy = oy + dy * t
                hz = oz + dz * t
                w0 = 1.0 - bu - bv
                nx = (
                    w0 * tri_normals[prim, 0, 0]
                    + bu * tri_normals[prim, 1, 0]
                    + bv * tri_normals[prim, 2, 0]
                )
                ny = (
                    w0 * tri_normals[prim, 0, 1]
                    + bu * tri_normals[prim, 1, 1]
                    + bv * tri_normals[prim, 2, 1]
                )
                nz = (
                    w0 * tri_normals[prim, 0, 2]
                    + bu * tri_normals[prim, 1, 2]
                    + bv * tri_normals[prim, 2, 2]
                )
                nl = math.sqrt(nx * nx + ny * ny + nz * nz)
                if nl > 0.0:
                    nx /= nl
                    ny /= nl
                    nz /= nl
                if nx * dx + ny * dy + nz * dz > 0.0:
                    nx = -nx
                    ny = -ny
                    nz = -nz
                if depth == 0:
                    acc_r += beta_r * tri_emissive[prim, 0]
                    acc_g += beta_g * tri_emissive[prim, 1]
                    acc_b += beta_b * tri_emissive[prim, 2]

                ar = tri_albedo[prim, 0]
                ag = tri_albedo[prim, 1]
                ab = tri_albedo[prim, 2]

                if n_lights > 0:
                    ul = u01_from(seed, ray, s, dim)
                    dim += 1
                    li = int(ul * n_lights)
                    if li >= n_lights:
                        li = n_lights - 1
                    fr = 0.0
                    fg = 0.0
                    fb = 0.0
                    ldx = 0.0
                    ldy = 0.0
                    ldz = 0.0
                    ldist = np.inf
                    kind = l_kinds[li]
                    if kind == KIND_AREA:
                        u1 = u01_from(seed, ray, s, dim)
                        u2 = u01_from(seed, ray, s, dim + 1)
                        u3 = u01_from(seed, ray, s, dim + 2)
                        dim += 3
                        lo = l_trirange[li, 0]
                        hi = l_trirange[li, 1]
                        tri = lo
                        for k in range(lo, hi):
                            if u1 <= l_tricum[k]:
                                tri = k
                                break
                            tri = k
                        su = math.sqrt(u2)
                        b0 = 1.0 - su
                        b1 = su * (1.0 - u3)
                        b2 = su * u3
                        yx = (
                            b0 * l_tris[tri, 0, 0]
                            + b1 * l_tris[tri, 1, 0]
                            + b2 * l_tris[tri, 2, 0]
                        )
                        yy = (
                            b0 * l_tris[tri, 0, 1]
                            + b1 * l_tris[tri, 1, 1]
                            + b2 * l_tris[tri, 2, 1]
                        )
                        yz = (
                            b0 * l_tris[tri, 0, 2]
                            + b1 * l_tris[tri, 1, 2]
                            + b2 * l_tris[tri, 2, 2]
                        )
                        e1x = l_tris[tri, 1, 0] - l_tris[tri, 0, 0]
                        e1y = l_tris[tri, 1, 1] - l_tris[tri, 0, 1]
                        e1z = l_tris[tri, 1, 2] - l_tris[tri, 0, 2]
                        e2x = l_tris[tri, 2, 0] - l_tris[tri, 0, 0]
                        e2y = l_tris[tri, 2, 1] - l_tris[tri, 0, 1]
                        e2z = l_tris[tri, 2, 2] - l_tris[tri, 0, 2]
                        lnx = e1y * e2z - e1z * e2y
                        lny = e1z * e2x - e1x * e2z
                        lnz = e1x * e2y - e1y * e2x
                        lnl = math.sqrt(lnx * lnx + lny * lny + lnz * lnz)
                        if lnl > 0.0:
                            lnx /= lnl
                            lny /= lnl
                            lnz /= lnl
                        vx = yx - hx
                        vy = yy - hy
                        vz = yz - hz
                        d = math.sqrt(vx * vx + vy * vy + vz * vz)
                        if d > 1e-12:
                            ldx = vx / d
                            ldy = vy / d
                            ldz = vz / d
                            ldist = d
                            cos_x = max(ldx * nx + ldy * ny + ldz * nz, 0.0)
                            cos_y = max(-(ldx * lnx + ldy * lny + ldz * lnz), 0.0)
                            geo = cos_x * cos_y / (d * d) * l_data[li, 0]
                            fr = l_trirad[tri, 0] * geo
                            fg = l_trirad[tri, 1] * geo
                            fb = l_trirad[tri, 2] * geo
                    elif kind == KIND_DIRECTIONAL:
                        ldx = -l_data[li, 0]
                        ldy = -l_data[li, 1]
                        ldz = -l_data[li, 2]
                        cos_x = max(ldx * nx + ldy * ny + ldz * nz, 0.0)
                        fr = l_data[li, 3] * cos_x
                        fg = l_data[li, 4] * cos_x
                        fb = l_data[li, 5] * cos_x
                    else:  # point or spot
                        vx = l_data[li, 0] - hx
                        vy = l_data[li, 1] - hy
                        vz = l_data[li, 2] - hz
                        d = math.sqrt(vx * vx + vy * vy + vz * vz)
                        if d > 1e-12 and d <= l_data[li, 6]:
                            ldx = vx / d
                            ldy = vy / d
                            ldz = vz / d
                            ldist = d
                            cos_x = max(ldx * nx + ldy * ny + ldz * nz, 0.0)
                            sc = cos_x / (d * d)
                            if kind == KIND_SPOT:
                                cosg = -(
                                    ldx * l_data[li, 7]
                                    + ldy * l_data[li, 8]
                                    + ldz * l_data[li, 9]
                                )
                                den = max(l_data[li, 10] - l_data[li, 11], 1e-9)
                                tt = min(max((cosg - l_data[li, 11]) / den, 0.0), 1.0)
                                sc *= tt * tt
                            fr = l_data[li, 3] * sc
                            fg = l_data[li, 4] * sc
                            fb = l_data[li, 5] * sc
                    if fr > 0.0 or fg > 0.0 or fb > 0.0:
                        sox = hx + nx * eps
                        soy = hy + ny * eps
                        soz = hz + nz * eps
                        tmax = ldist - 2.0 * eps if ldist != np.inf else 1e30
                        if not bvh_occluded(
                            bmin, bmax, meta, pidx, verts, sox, soy, soz, ldx, ldy, ldz, 1e-9, tmax
                        ):
                            inv_pdf = float(n_lights)
                            acc_r += beta_r * (ar / math.pi) * fr * inv_pdf
                            acc_g += beta_g * (ag / math.pi) * fg * inv_pdf
                            acc_b += beta_b * (ab / math.pi) * fb * inv_pdf

                beta_r *= ar
                beta_g *= ag
                beta_b *= ab
                if depth >= RR_START:
                    q = max(beta_r, max(beta_g, beta_b))
                    q = min(max(q, 0.05), 0.95)
                    if u01_from(seed, ray, s, dim) >= q:
                        dim += 1
                        break
                    dim += 1
                    beta_r /= q
                    beta_g /= q
                    beta_b /= q
                u1 = u01_from(seed, ray, s, dim)
                u2 = u01_from(seed, ray, s, dim + 1)
                dim += 2
                dx, dy, dz = _cosine_dir(nx, ny, nz, u1, u2)
                ox = hx + nx * eps
                oy = hy + ny * eps
                oz = hz + nz * eps
        out[ray, 0] = acc_r / spp
        out[ray, 1] = acc_g / spp
        out[ray, 2] = acc_b / spp


def trace_ray_radiance(scene, frame_index, origins, directions, spp, seed=0):
    """Path-traced incident radiance per ray; returns (N, 3) float64."""
    geom = scene.geometry_at(frame_index)
    ensure_bvh(geom)
    kinds, data, tri_range, tris, rads, cums = _pack_lights(scene)
    env_kind, env_img = _pack_environment(scene)
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    directions = np.ascontiguousarray(directions, dtype=np.float64)
    out = np.zeros((origins.shape[0], 3))
    tri_albedo = np.ascontiguousarray(geom.albedo[geom.tri_material])
    tri_emissive = np.ascontiguousarray(geom.emissive[geom.tri_material])
    eps = EPS_SCALE * max(scene.diagonal, 1e-6)
    _trace_rays(
        geom.bvh.bounds_min,
        geom.bvh.bounds_max,
        geom.bvh.meta,
        geom.bvh.prim_index,
        geom.tri_verts,
        geom.tri_normals,
        tri_albedo,
        tri_emissive,
        origins,
        directions,
        spp,
        np.uint64(seed),
        kinds,
        data,
        tri_range,
        tris,
        rads,
        cums,
        env_kind,
        env_img,
        eps,
        out,
    )
    return out


def render_reference(scene, frame_index, spp, seed=0, aa=False):
    """Path-trace one frame; returns (H, W, 3) float64 radiance.

    aa=False shoots every sample through the pixel center so silhouette
    pixels match a point-sampled geometry buffer; aa=True jitters the
    subpixel position (box filter) for standalone ground-truth imagery.
    """
    geom = scene.geometry_at(frame_index)
    ensure_bvh(geom)
    cam = scene.rig.camera_at(frame_index)
    kinds, data, tri_range, tris, rads, cums = _pack_lights(scene)
    env_kind, env_img = _pack_environment(scene)
    out = np.zeros((cam.height, cam.width, 3))
    tri_albedo = np.ascontiguousarray(geom.albedo[geom.tri_material])
    tri_emissive = np.ascontiguousarray(geom.emissive[geom.tri_material])
    eps = EPS_SCALE * max(scene.diagonal, 1e-6)
    _trace_image(
        geom.bvh.bounds_min,
        geom.bvh.bounds_max,
        geom.bvh.meta,
        geom.bvh.prim_index,
        geom.tri_verts,
        geom.tri_normals,
        tri_albedo,
        tri_emissive,
        np.asarray(cam.position, dtype=np.float64),
        np.asarray(cam.rotation, dtype=np.float64),
        math.tan(0.5 * cam.fov_y),
        cam.width / cam.height,
        cam.width,
        cam.height,
        spp,
        np.uint64(seed),
        kinds,
        data,
        tri_range,
        tris,
        rads,
        cums,
        env_kind,
        env_img,
        eps,
        1 if aa else 0,
        out,
    )
    return out
