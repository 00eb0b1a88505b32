"""Spherical-harmonics irradiance from screen probes.

Probe hemispheres are projected onto order-2 real SH (9 coefficients per
channel) using per-cell solid angles and mean directions; pixels gather the
SH of up to four nearby probes through the probe mask pyramid, blend them
with geometry-aware weights, and evaluate cosine-convolved irradiance at
their own normal. A temporal accumulator with count-driven spatial support
stabilizes the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mathutils import orthonormal_basis, to_world
from .screen_probes import (
    CELL_COUNT,
    MASK_SENTINEL,
    PROBE_SIDE,
    calculate_cell_size,
    find_closest_probe_batch,
    hemi_cell_moments,
)

SH_COEFFS = 9

# Band convolution factors for cosine-weighted (irradiance) evaluation.
SH_BAND_FACTOR = np.array(
    [math.pi] + [2.0 * math.pi / 3.0] * 3 + [math.pi / 4.0] * 5
)


def sh_basis(dirs):
    """Order-2 real SH basis evaluated at unit directions; (..., 9)."""
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    out = np.empty(d.shape[:-1] + (SH_COEFFS,))
    out[..., 0] = 0.282095
    out[..., 1] = 0.488603 * y
    out[..., 2] = 0.488603 * z
    out[..., 3] = 0.488603 * x
    out[..., 4] = 1.092548 * x * y
    out[..., 5] = 1.092548 * y * z
    out[..., 6] = 0.315392 * (3.0 * z * z - 1.0)
    out[..., 7] = 1.092548 * x * z
    out[..., 8] = 0.546274 * (x * x - y * y)
    return out


def cell_sh_integrals(normal):
    """Exact per-cell SH integrals in a probe's world frame; (..., 64, 9).

    Each cell's integral of Y over its solid angle is a degree-2 polynomial
    of the frame rotation, assembled from precomputed local direction
    moments, so projection is exact for cell-constant radiance.
    """
    omega, m1, m2 = hemi_cell_moments()
    t, b = orthonormal_basis(normal)
    n = np.asarray(normal, dtype=np.float64)
    M = np.stack([t, b, n], axis=-1)  # columns: local axes in world space
    wm1 = np.einsum("...ij,cj->...ci", M, m1)
    wm2 = np.einsum("...ij,cjk,...lk->...cil", M, m2, M)
    iY = np.empty(wm1.shape[:-1] + (SH_COEFFS,))
    iY[..., 0] = 0.282095 * omega
    iY[..., 1] = 0.488603 * wm1[..., 1]
    iY[..., 2] = 0.488603 * wm1[..., 2]
    iY[..., 3] = 0.488603 * wm1[..., 0]
    iY[..., 4] = 1.092548 * wm2[..., 0, 1]
    iY[..., 5] = 1.092548 * wm2[..., 1, 2]
    iY[..., 6] = 0.315392 * (3.0 * wm2[..., 2, 2] - omega)
    iY[..., 7] = 1.092548 * wm2[..., 0, 2]
    iY[..., 8] = 0.546274 * (wm2[..., 0, 0] - wm2[..., 1, 1])
    return iY


def project_probe_to_sh(radiance, normal):
    """Project probe cell radiance onto SH; (..., 64, 3) -> (..., 9, 3)."""
    iY = cell_sh_integrals(normal)
    return np.einsum("...cs,...ci->...si", iY, np.asarray(radiance))


def eval_irradiance(sh, normal):
    """Cosine-convolved SH evaluation: E(n) = sum_l A_l c_lm Y_lm(n)."""
    Y = sh_basis(normal)  # (..., 9)
    return np.einsum("...si,...s,s->...i", np.asarray(sh), Y, SH_BAND_FACTOR)


# ---------------------------------------------------------------------------
# Per-pixel interpolation
# ---------------------------------------------------------------------------

_WALK_OFFSETS = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass
class InterpolationResult:
    sh: np.ndarray  # (H, W, 9, 3)
    irradiance: np.ndarray  # (H, W, 3)
    relaxed: np.ndarray  # (H, W) bool


def interpolate_frame(grid, pyramid, gbuf, fov_y, cfg, rng):
    """Blend nearby probes' SH per pixel and evaluate irradiance.

    Each pixel jitters its lookup inside a disk (canceled when the landing
    pixel leaves the surface plane), walks the mask pyramid once per cardinal
    offset, and weights the found probes by screen distance, plane distance,
    and normal agreement. Pixels whose weights all vanish fall back to equal
    weights over the found probes and are flagged relaxed; pixels with no
    probes at all go black and relaxed.
    """
    H, W = gbuf.height, gbuf.width
    sky = gbuf.sky
    cell = calculate_cell_size(gbuf.depth, fov_y, W, H)

    py, px = np.mgrid[0:H, 0:W]
    ang = rng.random((H, W)) * 2.0 * np.pi
    rad = np.sqrt(rng.random((H, W))) * cfg.jitter_radius
    jx = np.clip(px + np.rint(rad * np.cos(ang)).astype(np.int64), 0, W - 1)
    jy = np.clip(py + np.rint(rad * np.sin(ang)).astype(np.int64), 0, H - 1)
    # cancel jitters that land off the pixel's surface plane (or on sky)
    plane = np.abs(
        np.sum((gbuf.position[jy, jx] - gbuf.position) * gbuf.normal, axis=-1)
    )
    bad = sky[jy, jx] | (plane >= cell)
    jx = np.where(bad, px, jx)
    jy = np.where(bad, py, jy)

    pixels = np.stack([jx, jy], axis=-1).reshape(-1, 2)
    n_walk = len(_WALK_OFFSETS)
    found = np.zeros((n_walk, H * W), dtype=bool)
    weights = np.zeros((n_walk, H * W))
    sh_src = np.zeros((n_walk, H * W, SH_COEFFS, 3))

    pos = gbuf.position.reshape(-1, 3)
    nrm = gbuf.normal.reshape(-1, 3)
    cellf = cell.reshape(-1)
    pxf = px.reshape(-1)
    pyf = py.reshape(-1)

    for k, off in enumerate(_WALK_OFFSETS):
        packed = find_closest_probe_batch(pyramid, pixels, off)
        ok = packed != MASK_SENTINEL
        if not np.any(ok):
            continue
        qx = np.where(ok, packed & np.uint32(0xFFFF), np.uint32(0)).astype(np.int64)
        qy = np.where(ok, packed >> np.uint32(16), np.uint32(0)).astype(np.int64)
        ty = qy // PROBE_SIDE
        tx = qx // PROBE_SIDE
        ok &= grid.valid[ty, tx]
        p_pos = grid.pos[ty, tx]
        p_nrm = grid.normal[ty, tx]
        d2 = (qx - pxf) ** 2 + (qy - pyf) ** 2
        gauss = np.exp(-d2 / (2.0 * cfg.distance_sigma ** 2))
        plane_d = np.abs(np.sum((p_pos - pos) * nrm, axis=-1))
        n_dot = np.maximum(np.sum(p_nrm * nrm, axis=-1), 0.0)
        w = gauss * (plane_d <= cellf) * n_dot ** cfg.normal_similarity_power
        found[k] = ok
        weights[k] = np.where(ok, w, 0.0)
        sh_src[k][ok] = grid.sh[ty[ok], tx[ok]]

    w_sum = weights.sum(axis=0)
    any_found = found.any(axis=0)
    degenerate = any_found & (w_sum <= 0.0)
    weights = np.where(degenerate[None, :], found.astype(np.float64), weights)
    w_sum = weights.sum(axis=0)

    sh = np.einsum("kn,knsc->nsc", weights, sh_src)
    nz = w_sum > 0.0
    sh[nz] /= w_sum[nz, None, None]

    E = np.maximum(eval_irradiance(sh, nrm), 0.0)
    relaxed = (degenerate | ~any_found) & ~sky.reshape(-1)
    E[~nz] = 0.0
    E[sky.reshape(-1)] = 0.0

    return InterpolationResult(
        sh=sh.reshape(H, W, SH_COEFFS, 3),
        irradiance=E.reshape(H, W, 3),
        relaxed=relaxed.reshape(H, W),
    )


# ---------------------------------------------------------------------------
# Temporal accumulation + count-driven spatial filtering
# ---------------------------------------------------------------------------


class TemporalDenoiser:
    """Running-mean history with disocclusion-aware spatial support.

    The history validates against the current surface via reprojected
    position/normal gates. The spatial pass radius shrinks linearly with the
    (pre-increment) accumulation count, so converged pixels are left alone;
    the radius field is max-dilated so fresh disocclusions also widen their
    surroundings. History stores the temporal (pre-spatial) result. Relaxed
    pixels never write history: with a valid history they pass it through
    unchanged, without one they emit the raw sample and restart the count.
    """

    def __init__(self, width, height, channels, cfg, fov_y):
        self.cfg = cfg
        self.fov_y = fov_y
        self.value = np.zeros((height, width, channels))
        self.count = np.zeros((height, width))
        self.pos = np.zeros((height, width, 3))
        self.normal = np.zeros((height, width, 3))
        self.has = np.zeros((height, width), dtype=bool)

    def step(self, sample, gbuf, relaxed=None):
        cfg = self.cfg
        H, W = gbuf.height, gbuf.width
        if relaxed is None:
            relaxed = np.zeros((H, W), dtype=bool)
        cell = calculate_cell_size(gbuf.depth, self.fov_y, W, H)

        py, px = np.mgrid[0:H, 0:W]
        qx = np.clip(np.rint(px + gbuf.motion[..., 0]).astype(np.int64), 0, W - 1)
        qy = np.clip(np.rint(py + gbuf.motion[..., 1]).astype(np.int64), 0, H - 1)
        inb = (
            (px + gbuf.motion[..., 0] >= -0.5)
            & (px + gbuf.motion[..., 0] < W - 0.5)
            & (py + gbuf.motion[..., 1] >= -0.5)
            & (py + gbuf.motion[..., 1] < H - 0.5)
        )
        h_val = self.value[qy, qx]
        h_cnt = self.count[qy, qx]
        h_pos = self.pos[qy, qx]
        h_nrm = self.normal[qy, qx]
        h_has = self.has[qy, qx] & inb

        plane = np.abs(np.sum((h_pos - gbuf.position) * gbuf.normal, axis=-1))
        n_dot = np.sum(h_nrm * gbuf.normal, axis=-1)
        valid = h_has & ~gbuf.sky & (plane < cell) & (n_dot > cfg.history_normal_min)

        n_prev = np.where(valid, h_cnt, 0.0)
        n_new = np.minimum(n_prev + 1.0, float(cfg.accum_cap))
        alpha = 1.0 / n_new
        temporal = np.where(
            valid[..., None], h_val + alpha[..., None] * (sample - h_val), sample
        )

        # relaxed pixels: keep history if any, else pass the sample, count 0
        keep = relaxed & valid
        temporal = np.where(keep[..., None], h_val, temporal)
        n_store = np.where(relaxed, np.where(valid, n_prev, 0.0), n_new)

        self.value = temporal
        self.count = n_store
        self.pos = gbuf.position.copy()
        self.normal = gbuf.normal.copy()
        self.has = ~gbuf.sky & (~relaxed | valid)

        radius = cfg.r_max * np.maximum(0.0, 1.0 - n_prev / float(cfg.n_full))
        radius = np.where(gbuf.sky, 0.0, radius)
        if cfg.dilate > 0:
            radius = _dilate_max(radius, cfg.dilate)

        out = _edge_aware_blur(temporal, radius, gbuf, cell, cfg)
        return out


def _dilate_max(field, steps):
    out = field
    for _ in range(steps):
        p = np.pad(out, 1, mode="edge")
        out = np.maximum.reduce(
            [p[dy : dy + field.shape[0], dx : dx + field.shape[1]] for dy in range(3) for dx in range(3)]
        )
    return out


def _edge_aware_blur(value, radius, gbuf, cell, cfg):
    """Separable Gaussian with per-pixel radius and geometry gates."""
    r_max = int(math.ceil(radius.max())) if radius.size else 0
    if r_max <= 0:
        return value.copy()
    sigma = np.maximum(radius / 2.0, 1e-6)
    out = value
    for axis in (1, 0):
        acc = out.copy()
        wacc = np.ones(radius.shape)
        for off in range(1, r_max + 1):
            for sgn in (-1, 1):
                shift = sgn * off
                v = _shift2d(out, axis, shift)
                p_pos = _shift2d(gbuf.position, axis, shift)
                p_nrm = _shift2d(gbuf.normal, axis, shift)
                p_sky = _shift2d(gbuf.sky, axis, shift, fill=True)
                g = np.exp(-(off * off) / (2.0 * sigma * sigma))
                plane = np.abs(np.sum((p_pos - gbuf.position) * gbuf.normal, axis=-1))
                n_dot = np.sum(p_nrm * gbuf.normal, axis=-1)
                w = (
                    g
                    * (off <= radius)
                    * ~p_sky
                    * (plane < cell)
                    * (n_dot > cfg.history_normal_min)
                )
                acc += v * w[..., None]
                wacc += w
        out = acc / wacc[..., None]
    return out


def _shift2d(a, axis, shift, fill=0):
    """Shift rows (axis 0) or columns (axis 1) with constant fill."""
    out = np.full_like(a, fill)
    if axis == 0:
        if shift > 0:
            out[shift:] = a[:-shift]
        else:
            out[:shift] = a[-shift:]
    else:
        if shift > 0:
            out[:, shift:] = a[:, :-shift]
        else:
            out[:, :shift] = a[:, -shift:]
    return out
