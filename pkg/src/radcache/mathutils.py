"""Shared small math: color weights, frames, octahedral maps, integer hashing.

Everything here is deterministic and works elementwise on numpy arrays unless
noted, so callers can pass either scalars or batched buffers.
"""

from __future__ import annotations

import numpy as np

# Rec. 709 relative luminance weights.
LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])


def rel_luminance(rgb):
    """Relative luminance of an (..., 3) RGB array."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb @ LUMA_WEIGHTS


def mean3(rgb):
    """Plain channel mean, the luminance proxy used by the hysteresis blend."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb @ np.array([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])


def normalize(v, axis=-1, fallback=None):
    """Unit vectors along `axis`; zero-length rows keep `fallback` (default +z)."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    if fallback is None:
        fallback = np.zeros(v.shape[-1])
        fallback[-1] = 1.0
    out = np.where(n > 0.0, v / np.where(n > 0.0, n, 1.0), fallback)
    return out


def orthonormal_basis(n):
    """Branchless tangent frame (t, b) for unit normals n, shape (..., 3).

    Deterministic in the normal alone, no poles that flip with tiny input
    changes away from n.z = -1 where the construction is pinned.
    """
    n = np.asarray(n, dtype=np.float64)
    z = n[..., 2]
    sign = np.where(z >= 0.0, 1.0, -1.0)
    a = -1.0 / (sign + z)
    b = n[..., 0] * n[..., 1] * a
    t = np.stack(
        [1.0 + sign * n[..., 0] ** 2 * a, sign * b, -sign * n[..., 0]], axis=-1
    )
    bt = np.stack([b, sign + n[..., 1] ** 2 * a, -n[..., 1]], axis=-1)
    return t, bt


def to_world(frame_t, frame_b, normal, local_dir):
    """Rotate local (tangent-space, +z = normal) directions into world space."""
    local_dir = np.asarray(local_dir, dtype=np.float64)
    return (
        frame_t * local_dir[..., 0:1]
        + frame_b * local_dir[..., 1:2]
        + normal * local_dir[..., 2:3]
    )


def to_local(frame_t, frame_b, normal, world_dir):
    world_dir = np.asarray(world_dir, dtype=np.float64)
    return np.stack(
        [
            np.sum(world_dir * frame_t, axis=-1),
            np.sum(world_dir * frame_b, axis=-1),
            np.sum(world_dir * normal, axis=-1),
        ],
        axis=-1,
    )


# ---------------------------------------------------------------------------
# Octahedral mappings.
#
# Full-sphere map: fold the lower hemisphere over the diamond edge; used for
# direction binning and 32-bit normal packing. Hemisphere map: diamond
# rotated 45 degrees onto the unit square; used for probe cells.
# ---------------------------------------------------------------------------


def oct_encode(d):
    """Unit sphere direction -> [0,1]^2."""
    d = np.asarray(d, dtype=np.float64)
    s = np.sum(np.abs(d), axis=-1, keepdims=True)
    p = d[..., :2] / s
    px, py = p[..., 0], p[..., 1]
    neg = d[..., 2] < 0.0
    fx = (1.0 - np.abs(py)) * np.where(px >= 0.0, 1.0, -1.0)
    fy = (1.0 - np.abs(px)) * np.where(py >= 0.0, 1.0, -1.0)
    u = np.where(neg, fx, px)
    v = np.where(neg, fy, py)
    return np.stack([u, v], axis=-1) * 0.5 + 0.5


def oct_decode(e):
    """[0,1]^2 -> unit sphere direction."""
    e = np.asarray(e, dtype=np.float64) * 2.0 - 1.0
    u, v = e[..., 0], e[..., 1]
    z = 1.0 - np.abs(u) - np.abs(v)
    t = np.maximum(-z, 0.0)
    x = u - np.where(u >= 0.0, t, -t)
    y = v - np.where(v >= 0.0, t, -t)
    return normalize(np.stack([x, y, z], axis=-1))


def hemi_oct_encode(d):
    """Upper-hemisphere (z >= 0) unit direction -> [0,1]^2."""
    d = np.asarray(d, dtype=np.float64)
    s = np.abs(d[..., 0]) + np.abs(d[..., 1]) + d[..., 2]
    px = d[..., 0] / s
    py = d[..., 1] / s
    u = px + py
    v = px - py
    return np.stack([u, v], axis=-1) * 0.5 + 0.5


def hemi_oct_decode(e):
    """[0,1]^2 -> upper-hemisphere unit direction."""
    e = np.asarray(e, dtype=np.float64) * 2.0 - 1.0
    u, v = e[..., 0], e[..., 1]
    px = (u + v) * 0.5
    py = (u - v) * 0.5
    z = 1.0 - np.abs(px) - np.abs(py)
    return normalize(np.stack([px, py, z], axis=-1))


def pack_normal(n):
    """Unit normal -> uint32 via 2x16-bit octahedral quantization."""
    e = oct_encode(n)
    q = np.clip(np.rint(e * 65535.0), 0, 65535).astype(np.uint32)
    return (q[..., 1] << np.uint32(16)) | q[..., 0]


def unpack_normal(p):
    p = np.asarray(p, dtype=np.uint32)
    u = (p & np.uint32(0xFFFF)).astype(np.float64) / 65535.0
    v = (p >> np.uint32(16)).astype(np.float64) / 65535.0
    return oct_decode(np.stack([u, v], axis=-1))


# ---------------------------------------------------------------------------
# Integer hashing. Two independent 32-bit finalizers (low-bias xorshift
# multiply chains) drive the cache addressing: one for bucket selection, one
# for the stored fingerprint. Keep the constants in sync with the numba
# copies in tracekernels.py (cross-checked by tests).
# ---------------------------------------------------------------------------

_U32 = np.uint32


def hash_lowbias32(x):
    """lowbias32 finalizer (Wellons), uint32 -> uint32."""
    x = np.asarray(x).astype(np.uint32)
    x ^= x >> _U32(16)
    x *= _U32(0x7FEB352D)
    x ^= x >> _U32(15)
    x *= _U32(0x846CA68B)
    x ^= x >> _U32(16)
    return x


def hash_fmix32(x):
    """murmur3 fmix32 finalizer, uint32 -> uint32."""
    x = np.asarray(x).astype(np.uint32)
    x ^= x >> _U32(16)
    x *= _U32(0x85EBCA6B)
    x ^= x >> _U32(13)
    x *= _U32(0xC2B2AE35)
    x ^= x >> _U32(16)
    return x


def hash_words(words, seed=0, kind="lowbias"):
    """Fold a sequence of uint32 words into one hash.

    `words` is a sequence of arrays (or scalars) broadcast against each other;
    folding is sequential so word order matters.
    """
    fn = hash_lowbias32 if kind == "lowbias" else hash_fmix32
    h = np.asarray(seed).astype(np.uint32)
    h = h + _U32(0)  # force copy
    for w in words:
        w = np.asarray(w).astype(np.uint32)
        h = fn(h ^ w)
    return h


def hash_u01(words, seed=0, kind="lowbias"):
    """Hash -> float64 uniform in [0, 1)."""
    return hash_words(words, seed, kind).astype(np.float64) / 4294967296.0


def derive_rng(seed, *keys):
    """Deterministic np.random.Generator for a (seed, keys...) context."""
    h = hash_words([np.uint32(k & 0xFFFFFFFF) for k in keys], seed=np.uint32(seed & 0xFFFFFFFF))
    return np.random.default_rng(int(h))


def halton(index, base):
    """Halton radical inverse for a scalar index >= 0."""
    f = 1.0
    r = 0.0
    i = int(index)
    while i > 0:
        f /= base
        r += f * (i % base)
        i //= base
    return r


def pack_f16(x):
    """Bit pattern of float16(x) as uint32; order-preserving for finite x >= 0."""
    return np.asarray(np.float16(x)).view(np.uint16).astype(np.uint32)
