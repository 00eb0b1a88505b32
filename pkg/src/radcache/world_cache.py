"""World-space irradiance cache on a spatial hash.

Secondary vertices deposit irradiance estimates into 8x8 cell tiles keyed by
a quantized descriptor (tile coords, LOD, direction bin, short-ray flag,
dominant ray axis). Tiles carry a mip pyramid (8x8, 4x4, 2x2, 1x1 of RGB +
sample count); queries walk fine to coarse until enough samples back the
value. Buckets use linear probing over a fixed slot count with 32-bit
fingerprints; unreferenced tiles age out via a per-tile decay counter.

Values stored here are irradiance: deposits carry no surface BRDF, and the
consumer multiplies by albedo/pi (and adds emission) when turning a query
into outgoing radiance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .mathutils import oct_encode
from .screen_probes import calculate_cell_size
from .tracekernels import fmix32, lowbias32

TILE_SIDE = 8
TILE_CELLS = TILE_SIDE * TILE_SIDE
BUCKET_HASH_SEED = np.uint64(0x1B873593)
FINGERPRINT_SEED = np.uint64(0xCC9E2D51)
DESCRIPTOR_WORDS = 7


def lod_for_distance(cam_dist, fov_y, width, height, base_cell_size, max_lod):
    """Cache LOD so one cell roughly matches the screen probe footprint."""
    s = calculate_cell_size(cam_dist, fov_y, width, height)
    ratio = np.maximum(np.asarray(s) / base_cell_size, 1.0)
    return np.clip(np.floor(np.log2(ratio)), 0, max_lod).astype(np.int64)


def make_descriptor(pos, ray_dir, ray_length, cam_dist, fov_y, width, height, base_cell_size, max_lod, leak_heuristic=True):
    """Quantize secondary vertices into cache cell descriptors.

    Returns (words (N, 7) uint32, cell (N, 2) intra-tile offsets, lod (N,)).
    Words: tile xyz, lod, 4x4 octahedral direction bin, short-ray flag,
    dominant ray axis. The intra-tile offset lives on the two non-dominant
    axes (ascending order) and indexes the 8x8 payload, so it is not hashed.
    """
    pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
    ray_dir = np.atleast_2d(np.asarray(ray_dir, dtype=np.float64))
    ray_length = np.atleast_1d(np.asarray(ray_length, dtype=np.float64))
    cam_dist = np.atleast_1d(np.asarray(cam_dist, dtype=np.float64))
    n = pos.shape[0]

    lod = lod_for_distance(cam_dist, fov_y, width, height, base_cell_size, max_lod)
    cell = base_cell_size * np.exp2(lod.astype(np.float64))

    fine = np.floor(pos / cell[:, None]).astype(np.int64)
    tile = fine >> 3
    intra = (fine - (tile << 3)).astype(np.int64)  # 0..7 per axis

    axis = np.argmax(np.abs(ray_dir), axis=-1)
    other = np.stack([np.where(axis == 0, 1, 0), np.where(axis == 2, 1, 2)], axis=-1)
    cell_idx = np.take_along_axis(intra, other, axis=-1)

    e = oct_encode(ray_dir)
    b = np.clip((e * 4.0).astype(np.int64), 0, 3)
    dir_bin = b[..., 1] * 4 + b[..., 0]
    short = (ray_length < cell).astype(np.int64) if leak_heuristic else np.zeros(n, dtype=np.int64)

    words = np.empty((n, DESCRIPTOR_WORDS), dtype=np.uint32)
    words[:, 0:3] = tile.astype(np.int32).view(np.uint32).reshape(n, 3)
    words[:, 3] = lod.astype(np.uint32)
    words[:, 4] = dir_bin.astype(np.uint32)
    words[:, 5] = short.astype(np.uint32)
    words[:, 6] = axis.astype(np.uint32)
    return words, cell_idx.astype(np.int64), lod


def hash_descriptor(words, bucket_count):
    """(bucket, fingerprint) for descriptor word rows; fingerprint never 0."""
    words = np.atleast_2d(np.asarray(words, dtype=np.uint32))
    n = words.shape[0]
    bucket = np.empty(n, dtype=np.int64)
    fp = np.empty(n, dtype=np.uint32)
    _hash_rows(words, np.int64(bucket_count), bucket, fp)
    return bucket, fp


@njit(cache=True)
def _hash_rows(words, bucket_count, out_bucket, out_fp):
    for i in range(words.shape[0]):
        h = BUCKET_HASH_SEED
        f = FINGERPRINT_SEED
        for k in range(words.shape[1]):
            w = np.uint64(words[i, k])
            h = lowbias32(h ^ w)
            f = fmix32(f ^ w)
        out_bucket[i] = np.int64(h % np.uint64(bucket_count))
        if f == np.uint64(0):
            f = np.uint64(1)
        out_fp[i] = np.uint32(f)


@njit(cache=True)
def _find_or_insert(
    words,
    fingerprints,
    tile_of,
    bucket_count,
    bucket_size,
    back_slot,
    free_list,
    free_top,
    alloc_cursor,
    tile_capacity,
    decay,
    decay_init,
    out_tile,
):
    """Serial probe/insert in ray order; returns (overflow, inserted) counts.

    out_tile[i] = tile slot or -1 when the bucket or the tile pool is full.
    Accessing an entry (hit or insert) resets its decay counter.
    """
    n_overflow = 0
    n_inserted = 0
    for i in range(words.shape[0]):
        h = BUCKET_HASH_SEED
        f = FINGERPRINT_SEED
        for k in range(words.shape[1]):
            w = np.uint64(words[i, k])
            h = lowbias32(h ^ w)
            f = fmix32(f ^ w)
        bucket = np.int64(h % np.uint64(bucket_count))
        fp = np.uint32(f)
        if fp == np.uint32(0):
            fp = np.uint32(1)
        base = bucket * bucket_size
        tile = -1
        for s in range(bucket_size):
            cur = fingerprints[base + s]
            if cur == fp:
                tile = tile_of[base + s]
                break
            if cur == np.uint32(0):
                if free_top[0] > 0:
                    free_top[0] -= 1
                    t = free_list[free_top[0]]
                elif alloc_cursor[0] < tile_capacity:
                    t = alloc_cursor[0]
                    alloc_cursor[0] += 1
                else:
                    t = -1
                if t >= 0:
                    fingerprints[base + s] = fp
                    tile_of[base + s] = t
                    back_slot[t] = base + s
                    n_inserted += 1
                    tile = t
                break
        if tile < 0:
            n_overflow += 1
        else:
            decay[tile] = decay_init
        out_tile[i] = tile
    return n_overflow, n_inserted


@dataclass
class WorldCacheStats:
    inserted: int = 0
    overflow: int = 0
    evicted: int = 0
    live: int = 0
    deposits: int = 0
    query_hits: int = 0
    query_misses: int = 0


class WorldCacheGrid:
    """Hash-bucketed tile pool with per-tile mip chains and decay."""

    def __init__(self, cfg, base_cell_size, fov_y, width, height):
        self.bucket_count = int(cfg.bucket_count)
        self.bucket_size = int(cfg.bucket_size)
        self.tile_capacity = int(cfg.tile_capacity)
        self.base_cell_size = float(base_cell_size)
        self.max_lod = int(cfg.max_lod)
        self.hysteresis = float(cfg.ema_hysteresis)
        self.min_samples = float(cfg.min_samples)
        self.decay_init = int(cfg.decay_init)
        self.leak_heuristic = bool(cfg.leak_heuristic)
        self.fov_y = float(fov_y)
        self.width = int(width)
        self.height = int(height)

        slots = self.bucket_count * self.bucket_size
        self.fingerprints = np.zeros(slots, dtype=np.uint32)
        self.tile_of = np.full(slots, -1, dtype=np.int32)
        self.back_slot = np.full(self.tile_capacity, -1, dtype=np.int64)
        self.free_list = np.zeros(self.tile_capacity, dtype=np.int64)
        self.free_top = np.zeros(1, dtype=np.int64)
        self.alloc_cursor = np.zeros(1, dtype=np.int64)
        self.decay = np.zeros(self.tile_capacity, dtype=np.int64)

        T, S = self.tile_capacity, TILE_SIDE
        self.mip_rgb = [
            np.zeros((T, S >> k, S >> k, 3), dtype=np.float64) for k in range(4)
        ]
        self.mip_count = [
            np.zeros((T, S >> k, S >> k), dtype=np.float64) for k in range(4)
        ]

    # -- descriptor helpers -------------------------------------------------

    def descriptors(self, pos, ray_dir, ray_length, cam_dist):
        return make_descriptor(
            pos,
            ray_dir,
            ray_length,
            cam_dist,
            self.fov_y,
            self.width,
            self.height,
            self.base_cell_size,
            self.max_lod,
            self.leak_heuristic,
        )

    # -- map ----------------------------------------------------------------

    def find_or_insert(self, words, stats=None):
        """Tile slots for descriptor rows; -1 where the map is saturated."""
        words = np.atleast_2d(np.asarray(words, dtype=np.uint32))
        out = np.empty(words.shape[0], dtype=np.int64)
        ovf, ins = _find_or_insert(
            words,
            self.fingerprints,
            self.tile_of,
            np.int64(self.bucket_count),
            np.int64(self.bucket_size),
            self.back_slot,
            self.free_list,
            self.free_top,
            self.alloc_cursor,
            np.int64(self.tile_capacity),
            self.decay,
            np.int64(self.decay_init),
            out,
        )
        if stats is not None:
            stats.overflow += int(ovf)
            stats.inserted += int(ins)
        return out

    def live_tiles(self):
        return int(np.count_nonzero(self.back_slot >= 0))

    # -- deposits and prefilter ----------------------------------------------

    def accumulate(self, tile_idx, cell_idx, values, stats=None):
        """EMA-deposit irradiance samples and rebuild touched tile mips.

        Multiple samples landing in one cell in one frame are averaged before
        a single blend step. The blend factor warms up as min(h, c / (c + k))
        with c = lifetime sample count and k = this frame's samples, so a
        cold cell takes its first frame mean exactly.
        """
        tile_idx = np.asarray(tile_idx, dtype=np.int64)
        cell_idx = np.atleast_2d(np.asarray(cell_idx, dtype=np.int64))
        values = np.atleast_2d(np.asarray(values, dtype=np.float64))
        ok = tile_idx >= 0
        if not np.any(ok):
            return
        tile_idx = tile_idx[ok]
        cell_idx = cell_idx[ok]
        values = values[ok]
        if stats is not None:
            stats.deposits += int(tile_idx.shape[0])

        lin = tile_idx * TILE_CELLS + cell_idx[:, 0] * TILE_SIDE + cell_idx[:, 1]
        uniq, inv = np.unique(lin, return_inverse=True)
        sums = np.zeros((uniq.shape[0], 3))
        np.add.at(sums, inv, values)
        k = np.bincount(inv, minlength=uniq.shape[0]).astype(np.float64)
        frame_mean = sums / k[:, None]

        t = uniq // TILE_CELLS
        a = (uniq % TILE_CELLS) // TILE_SIDE
        b = uniq % TILE_SIDE
        c = self.mip_count[0][t, a, b]
        h_eff = np.minimum(self.hysteresis, c / (c + k))
        self.mip_rgb[0][t, a, b] = (
            frame_mean * (1.0 - h_eff)[:, None] + self.mip_rgb[0][t, a, b] * h_eff[:, None]
        )
        self.mip_count[0][t, a, b] = c + k
        self._refilter(np.unique(t))

    def _refilter(self, tiles):
        """Sample-weighted box downsample of the touched tiles' mip chains."""
        for k in range(3):
            rgb = self.mip_rgb[k][tiles]
            cnt = self.mip_count[k][tiles]
            K, S = rgb.shape[0], rgb.shape[1]
            w = (rgb * cnt[..., None]).reshape(K, S // 2, 2, S // 2, 2, 3).sum(axis=(2, 4))
            c = cnt.reshape(K, S // 2, 2, S // 2, 2).sum(axis=(2, 4))
            self.mip_rgb[k + 1][tiles] = w / np.maximum(c, 1e-300)[..., None]
            self.mip_count[k + 1][tiles] = c

    # -- queries --------------------------------------------------------------

    def query(self, tile_idx, cell_idx, stats=None):
        """Prefiltered irradiance per row: fine mip first, coarser until the
        sample count reaches min_samples. Returns (rgb (N, 3), found (N,))."""
        tile_idx = np.asarray(tile_idx, dtype=np.int64)
        cell_idx = np.atleast_2d(np.asarray(cell_idx, dtype=np.int64))
        n = tile_idx.shape[0]
        out = np.zeros((n, 3))
        found = np.zeros(n, dtype=bool)
        ok = tile_idx >= 0
        t = np.where(ok, tile_idx, 0)
        for k in range(4):
            a = cell_idx[:, 0] >> k
            b = cell_idx[:, 1] >> k
            cnt = self.mip_count[k][t, a, b]
            take = ok & ~found & (cnt >= self.min_samples)
            out[take] = self.mip_rgb[k][t, a, b][take]
            found |= take
        if stats is not None:
            stats.query_hits += int(found.sum())
            stats.query_misses += int(n - found.sum())
        return out, found

    # -- aging -----------------------------------------------------------------

    def decay_and_evict(self, stats=None):
        """Age all live tiles by one frame; clear the ones that hit zero."""
        live = self.back_slot >= 0
        self.decay[live] -= 1
        dead = live & (self.decay <= 0)
        idx = np.nonzero(dead)[0]
        for t in idx:
            slot = self.back_slot[t]
            self.fingerprints[slot] = 0
            self.tile_of[slot] = -1
            self.back_slot[t] = -1
            self.free_list[self.free_top[0]] = t
            self.free_top[0] += 1
            for k in range(4):
                self.mip_rgb[k][t] = 0.0
                self.mip_count[k][t] = 0.0
        if stats is not None:
            stats.evicted += int(idx.shape[0])
            stats.live = self.live_tiles()
        return int(idx.shape[0])
