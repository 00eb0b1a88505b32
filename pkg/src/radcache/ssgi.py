"""Screen-space horizon sampling: short-range AO and bent normals.

One screen-space slice direction per frame (golden-angle rotation) marches a
few depth-buffer steps to each side of every pixel, tracking the highest
horizon. The slice's ambient occlusion and bent normal accumulate through
the shared temporal denoiser; the final cone (bent normal + aperture from
AO) scales the probe SH irradiance through zonal visibility factors with a
mild aperture-dependent Hann window against ringing.
"""

from __future__ import annotations

import math

import numpy as np

from .irradiance import SH_BAND_FACTOR, sh_basis
from .mathutils import normalize
from .screen_probes import calculate_cell_size

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))

# Hann-style spectral window over band index l/3: 0.5 * (1 + cos(pi l / 3))
_HANN_BAND = np.array([1.0, 0.75, 0.25])
_BAND_OF_COEFF = np.array([0, 1, 1, 1, 2, 2, 2, 2, 2])


def slice_direction(frame_index):
    """Unit 2D screen direction of this frame's slice (same for all pixels)."""
    phi = GOLDEN_ANGLE * frame_index
    return np.array([math.cos(phi), math.sin(phi)])


def horizon_slice(gbuf, fov_y, frame_index, steps=8, radius=0.25):
    """March one slice per pixel; returns (ao (H, W), bent (H, W, 3)).

    The search radius is `radius` world units scaled by the probe footprint
    at each pixel (relative to depth 1), and converted to a fixed per-step
    pixel advance. The horizon angle per side is the minimum angle between
    the normal and any sample's offset direction, clamped to [0, pi/2];
    AO of the slice is (sin h+ + sin h-) / 2 and the bent normal tilts from
    the surface normal toward the open side by (h+ - h-) / 2.
    """
    H, W = gbuf.height, gbuf.width
    sdir = slice_direction(frame_index)
    cell1 = calculate_cell_size(1.0, fov_y, W, H)
    cell = calculate_cell_size(gbuf.depth, fov_y, W, H)
    radius_world = radius * cell / cell1
    pixels_per_world = 8.0 / np.maximum(cell, 1e-12)
    step_px = np.maximum(radius_world * pixels_per_world / steps, 1.0)

    py, px = np.mgrid[0:H, 0:W]
    pos = gbuf.position
    nrm = gbuf.normal

    # screen tangent of the slice projected on the surface
    h_side = np.full((2, H, W), 0.5 * math.pi)
    tangent_w = np.zeros((H, W, 3))

    for side, sgn in enumerate((1.0, -1.0)):
        for s in range(1, steps + 1):
            dx = np.rint(px + sgn * sdir[0] * step_px * s).astype(np.int64)
            dy = np.rint(py + sgn * sdir[1] * step_px * s).astype(np.int64)
            inb = (dx >= 0) & (dx < W) & (dy >= 0) & (dy < H)
            dxc = np.clip(dx, 0, W - 1)
            dyc = np.clip(dy, 0, H - 1)
            sp = pos[dyc, dxc]
            v = sp - pos
            d = np.linalg.norm(v, axis=-1)
            ok = inb & ~gbuf.sky & ~gbuf.sky[dyc, dxc] & (d > 1e-12) & (d <= radius_world)
            vn = v / np.maximum(d, 1e-12)[..., None]
            cosang = np.clip(np.sum(vn * nrm, axis=-1), -1.0, 1.0)
            ang = np.arccos(cosang)  # angle from normal; horizon = min
            ang = np.clip(ang, 0.0, 0.5 * math.pi)
            h_side[side] = np.where(ok, np.minimum(h_side[side], ang), h_side[side])
            if side == 0:
                # remember an in-plane tangent for the bent rotation
                t = vn - np.sum(vn * nrm, axis=-1)[..., None] * nrm
                tl = np.linalg.norm(t, axis=-1)
                fresh = ok & (np.linalg.norm(tangent_w, axis=-1) == 0.0) & (tl > 1e-9)
                tangent_w = np.where(fresh[..., None], t / np.maximum(tl, 1e-12)[..., None], tangent_w)

    h_pos, h_neg = h_side[0], h_side[1]
    ao = 0.5 * (np.sin(h_pos) + np.sin(h_neg))
    ao = np.where(gbuf.sky, 1.0, ao)

    # rotate the normal toward the positive-side tangent by (h+ - h-) / 2
    delta = 0.5 * (h_pos - h_neg)
    have_t = np.linalg.norm(tangent_w, axis=-1) > 0.0
    delta = np.where(have_t, delta, 0.0)
    bent = np.cos(delta)[..., None] * nrm + np.sin(delta)[..., None] * tangent_w
    bent = normalize(bent, fallback=None)
    bent = np.where(gbuf.sky[..., None], nrm, bent)
    return ao, bent


def cone_aperture_from_ao(ao):
    """Aperture angle of the visibility cone implied by an AO value."""
    return np.arccos(np.clip(1.0 - np.asarray(ao, dtype=np.float64), -1.0, 1.0))


def cone_band_factors(aperture):
    """Zonal visibility factors V_l of a cone of half-angle beta.

    Closed forms of 2 pi * integral_0^beta P_l(cos t) cos t sin t dt,
    normalized so a full hemisphere cone (beta = pi/2) gives V_l = 1.
    V_2 may exceed 1 for mid apertures; that is the true band-2 response.
    """
    beta = np.asarray(aperture, dtype=np.float64)
    c = np.cos(beta)
    s2 = np.sin(beta) ** 2
    V0 = s2
    V1 = 1.0 - c ** 3
    V2 = 1.0 - 3.0 * c ** 4 + 2.0 * c * c
    return np.stack([V0, V1, V2], axis=-1)


def window_factors(aperture, strength=1.0):
    """Aperture-blended Hann window per band: identity at beta = pi/2."""
    beta = np.asarray(aperture, dtype=np.float64)
    t = np.clip(strength * (1.0 - np.sin(beta)), 0.0, 1.0)
    return 1.0 - t[..., None] * (1.0 - _HANN_BAND)


def combine_near_far(sh, bent, aperture, window_strength=1.0):
    """Bent-cone-weighted SH irradiance; (..., 9, 3) + cone -> (..., 3).

    E = sum_l A_l w_l(beta) V_l(beta) sum_m c_lm Y_lm(bent). With an open
    cone (beta = pi/2) both w and V collapse to 1 and this equals the plain
    cosine-convolved evaluation at the bent (= surface) normal.
    """
    V = cone_band_factors(aperture)
    w = window_factors(aperture, window_strength)
    scale = (V * w)[..., _BAND_OF_COEFF] * SH_BAND_FACTOR
    Y = sh_basis(bent)
    return np.einsum("...si,...s,...s->...i", np.asarray(sh), Y, scale)
