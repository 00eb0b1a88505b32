"""Screen-space hemispherical probe cache.

One probe per 8x8 pixel tile, 64 radiance cells per probe in a hemispherical
octahedral layout (RGB + traveled ray distance). Probes are respawned at
jittered pixels, reprojected from the previous frame, patched onto disoccluded
tiles to keep the traced-ray budget constant, reconstructed from reprojected
neighbors with parallax correction, blended with a shadow-preserving
hysteresis, filtered along probe rows/columns, and spilled into a small LRU
side cache when a respawn rejects their history.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mathutils import (
    hash_u01,
    hash_words,
    halton,
    hemi_oct_decode,
    hemi_oct_encode,
    normalize,
    orthonormal_basis,
    pack_f16,
    pack_normal,
    rel_luminance,
    to_world,
    unpack_normal,
)

PROBE_SIDE = 8
CELL_COUNT = PROBE_SIDE * PROBE_SIDE
SKY_DISTANCE = 1.0e4  # hit-distance sentinel for rays that left the scene
MASK_SENTINEL = np.uint32(0xFFFFFFFF)
PROJECTED_SIZE = 8.0  # pixels covered by one probe cell footprint
MIN_HYSTERESIS_LUMA = 1e-4
FILTER_ANGLE_COS = math.cos(math.pi / 50.0)


def calculate_cell_size(distance, fov_y, width, height):
    """World-space size of a probe footprint at a given camera distance.

    Scales with the vertical field of view so that the footprint covers
    roughly PROJECTED_SIZE pixels regardless of resolution; the max() term
    keeps portrait and landscape aspect ratios consistent.
    """
    distance_scale = math.tan(
        fov_y * PROJECTED_SIZE * max(1.0 / height, height / (width * width))
    )
    return distance_scale * np.asarray(distance, dtype=np.float64)


# ---------------------------------------------------------------------------
# Hemispherical cell geometry (local frame, +z up). Solid angles and mean
# directions come from a dense deterministic binning of the hemisphere; the
# table is cached at module level.
# ---------------------------------------------------------------------------

_CELL_TABLE = None


def cell_centers_local():
    """Decoded directions of the 64 cell centers in the local frame."""
    ids = np.arange(CELL_COUNT)
    e = (np.stack([ids % PROBE_SIDE, ids // PROBE_SIDE], axis=-1) + 0.5) / PROBE_SIDE
    return hemi_oct_decode(e)


def cell_of_direction(local_dirs):
    """Cell index for local (+z) directions."""
    e = hemi_oct_encode(local_dirs)
    q = np.clip((e * PROBE_SIDE).astype(np.int64), 0, PROBE_SIDE - 1)
    return q[..., 1] * PROBE_SIDE + q[..., 0]


def bin_hemisphere(n_theta=1024, n_phi=1024):
    """Area-uniform hemisphere directions and their cell assignment."""
    z = (np.arange(n_theta) + 0.5) / n_theta  # uniform in z = equal area
    phi = (np.arange(n_phi) + 0.5) / n_phi * 2.0 * np.pi
    zz, pp = np.meshgrid(z, phi, indexing="ij")
    r = np.sqrt(np.maximum(1.0 - zz * zz, 0.0))
    dirs = np.stack([r * np.cos(pp), r * np.sin(pp), zz], axis=-1).reshape(-1, 3)
    return dirs, cell_of_direction(dirs)


def hemi_cell_table():
    """(solid_angle (64,), mean_dir (64, 3)); solid angles sum to 2*pi."""
    global _CELL_TABLE
    if _CELL_TABLE is None:
        dirs, cells = bin_hemisphere()
        counts = np.bincount(cells, minlength=CELL_COUNT).astype(np.float64)
        omega = 2.0 * np.pi * counts / dirs.shape[0]
        mu = np.zeros((CELL_COUNT, 3))
        for a in range(3):
            mu[:, a] = np.bincount(cells, weights=dirs[:, a], minlength=CELL_COUNT)
        mu = normalize(mu / np.maximum(counts[:, None], 1.0))
        _CELL_TABLE = (omega, mu)
    return _CELL_TABLE


_CELL_MOMENTS = None


def hemi_cell_moments():
    """Per-cell direction moments over the local hemisphere.

    Returns (omega (64,), m1 (64, 3), m2 (64, 3, 3)): the integrals of 1, d,
    and d d^T over each cell's solid angle. Degree-2 polynomials of the
    direction (e.g. low-order spherical harmonics) integrate exactly against
    cell-constant radiance using these, in any rotated frame.
    """
    global _CELL_MOMENTS
    if _CELL_MOMENTS is None:
        dirs, cells = bin_hemisphere()
        w = 2.0 * np.pi / dirs.shape[0]
        omega = np.bincount(cells, minlength=CELL_COUNT).astype(np.float64) * w
        m1 = np.zeros((CELL_COUNT, 3))
        m2 = np.zeros((CELL_COUNT, 3, 3))
        for a in range(3):
            m1[:, a] = np.bincount(cells, weights=dirs[:, a], minlength=CELL_COUNT) * w
            for bb in range(a, 3):
                v = np.bincount(cells, weights=dirs[:, a] * dirs[:, bb], minlength=CELL_COUNT) * w
                m2[:, a, bb] = v
                m2[:, bb, a] = v
        _CELL_MOMENTS = (omega, m1, m2)
    return _CELL_MOMENTS


# ---------------------------------------------------------------------------
# Probe grid state
# ---------------------------------------------------------------------------


@dataclass
class ProbeGrid:
    tiles_x: int
    tiles_y: int
    valid: np.ndarray  # (ty, tx) bool
    pixel: np.ndarray  # (ty, tx, 2) int32 x, y
    pos: np.ndarray  # (ty, tx, 3)
    normal: np.ndarray  # (ty, tx, 3)
    depth: np.ndarray  # (ty, tx)
    cell_size: np.ndarray  # (ty, tx)
    radiance: np.ndarray  # (ty, tx, 64, 3)
    hitdist: np.ndarray  # (ty, tx, 64)
    sh: np.ndarray  # (ty, tx, 9, 3)
    traced: np.ndarray  # (ty, tx) bool, spawned this frame

    @staticmethod
    def empty(width, height):
        ty = (height + PROBE_SIDE - 1) // PROBE_SIDE
        tx = (width + PROBE_SIDE - 1) // PROBE_SIDE
        return ProbeGrid(
            tiles_x=tx,
            tiles_y=ty,
            valid=np.zeros((ty, tx), dtype=bool),
            pixel=np.zeros((ty, tx, 2), dtype=np.int32),
            pos=np.zeros((ty, tx, 3)),
            normal=np.zeros((ty, tx, 3)),
            depth=np.zeros((ty, tx)),
            cell_size=np.zeros((ty, tx)),
            radiance=np.zeros((ty, tx, CELL_COUNT, 3)),
            hitdist=np.zeros((ty, tx, CELL_COUNT)),
            sh=np.zeros((ty, tx, 9, 3)),
            traced=np.zeros((ty, tx), dtype=bool),
        )

    def frames(self):
        t, b = orthonormal_basis(self.normal)
        return t, b


# ---------------------------------------------------------------------------
# Spawning
# ---------------------------------------------------------------------------


@dataclass
class SpawnList:
    """One candidate probe per spawn tile (spawn tile = ux*uy probe tiles)."""

    tile: np.ndarray  # (S, 2) int32 target probe tile (ty, tx)
    pixel: np.ndarray  # (S, 2) int32 pixel (x, y)
    valid: np.ndarray  # (S,) bool


def _jitter01(frame_index, tile_y, tile_x, seed, salt):
    """Halton(2,3) jitter decorrelated per tile by a hashed toroidal shift."""
    h2 = halton(frame_index + 1, 2)
    h3 = halton(frame_index + 1, 3)
    sx = hash_u01([tile_x, tile_y, salt], seed=seed)
    sy = hash_u01([tile_x, tile_y, salt + 1], seed=seed)
    return (h2 + sx) % 1.0, (h3 + sy) % 1.0


def _pixel_in_tile(gbuf, ty, tx, jx, jy):
    x0, y0 = tx * PROBE_SIDE, ty * PROBE_SIDE
    px = min(x0 + int(jx * PROBE_SIDE), gbuf.width - 1)
    py = min(y0 + int(jy * PROBE_SIDE), gbuf.height - 1)
    return px, py


def spawn_probes(gbuf, frame_index, cfg, seed):
    """Choose one candidate probe pixel per spawn tile.

    The sub-tile (which probe tile of the spawn tile gets the probe) cycles
    through all ux*uy sub-tiles over ux*uy frames, with a per-spawn-tile
    hashed phase; the pixel inside the chosen tile is Halton-jittered. On a
    static view this fills exactly 1/(ux*uy) of the tiles per frame until all
    are covered. Sky pixels produce no probe.
    """
    ux, uy = cfg.screen.upscale_x, cfg.screen.upscale_y
    ty_n = (gbuf.height + PROBE_SIDE - 1) // PROBE_SIDE
    tx_n = (gbuf.width + PROBE_SIDE - 1) // PROBE_SIDE
    sy_n = (ty_n + uy - 1) // uy
    sx_n = (tx_n + ux - 1) // ux

    tiles = np.zeros((sy_n * sx_n, 2), dtype=np.int32)
    pixels = np.zeros((sy_n * sx_n, 2), dtype=np.int32)
    valid = np.zeros(sy_n * sx_n, dtype=bool)
    k = 0
    for sy in range(sy_n):
        for sx in range(sx_n):
            subs = [
                (sy * uy + qy, sx * ux + qx)
                for qy in range(uy)
                for qx in range(ux)
                if sy * uy + qy < ty_n and sx * ux + qx < tx_n
            ]
            phase = int(hash_words([sx, sy, 0x5A17], seed=seed))
            t_y, t_x = subs[(frame_index + phase) % len(subs)]
            jx, jy = _jitter01(frame_index, t_y, t_x, seed, salt=0x11)
            px, py = _pixel_in_tile(gbuf, t_y, t_x, jx, jy)
            tiles[k] = (t_y, t_x)
            pixels[k] = (px, py)
            valid[k] = not gbuf.sky[py, px]
            k += 1
    return SpawnList(tile=tiles, pixel=pixels, valid=valid)


# ---------------------------------------------------------------------------
# Reprojection
# ---------------------------------------------------------------------------


@dataclass
class ReprojectedGrid:
    """Per-tile winners of the previous-frame probe reprojection."""

    valid: np.ndarray  # (ty, tx)
    pixel: np.ndarray  # (ty, tx, 2) winning pixel x, y
    pos: np.ndarray
    normal: np.ndarray
    depth: np.ndarray
    cell_size: np.ndarray
    radiance: np.ndarray
    hitdist: np.ndarray
    sh: np.ndarray


def reproject_probes(prev_grid, gbuf, fov_y, cfg):
    """Per tile, pick the pixel whose geometry best matches a previous probe.

    Every pixel p maps to q = p + motion; the previous probe of q's tile is a
    candidate if p lies on its plane (distance below the probe footprint) and
    the normals agree. Score packs the world distance into the high 16 bits
    (half-float bits, order preserving) and the lane id into the low 16, and
    the minimum wins, matching the atomic-min formulation. Tiles reproject
    independently, so one previous probe may win several tiles.
    """
    H, W = gbuf.height, gbuf.width
    ty_n = (H + PROBE_SIDE - 1) // PROBE_SIDE
    tx_n = (W + PROBE_SIDE - 1) // PROBE_SIDE
    Hp, Wp = ty_n * PROBE_SIDE, tx_n * PROBE_SIDE

    def pad(a, fill=0.0):
        if a.shape[0] == Hp and a.shape[1] == Wp:
            return a
        out = np.full((Hp, Wp) + a.shape[2:], fill, dtype=a.dtype)
        out[:H, :W] = a
        return out

    py, px = np.mgrid[0:Hp, 0:Wp]
    alive = pad(~gbuf.sky, fill=False)
    motion = pad(gbuf.motion)
    qx = np.rint(px + motion[..., 0]).astype(np.int64)
    qy = np.rint(py + motion[..., 1]).astype(np.int64)
    inb = (qx >= 0) & (qx < W) & (qy >= 0) & (qy < H)
    qtx = np.clip(qx // PROBE_SIDE, 0, prev_grid.tiles_x - 1)
    qty = np.clip(qy // PROBE_SIDE, 0, prev_grid.tiles_y - 1)

    cand = alive & inb & prev_grid.valid[qty, qtx]
    ppos = prev_grid.pos[qty, qtx]
    pnrm = prev_grid.normal[qty, qtx]
    gpos = pad(gbuf.position)
    gnrm = pad(gbuf.normal)
    gdepth = pad(gbuf.depth, fill=np.inf)
    cell = calculate_cell_size(gdepth, fov_y, W, H)

    plane_dist = np.abs(np.sum((ppos - gpos) * gnrm, axis=-1))
    normal_ok = np.sum(pnrm * gnrm, axis=-1) > cfg.screen.normal_reuse_min
    cand &= (plane_dist < cell) & normal_ok

    dist = np.linalg.norm(ppos - gpos, axis=-1)
    lane = ((py % PROBE_SIDE) * PROBE_SIDE + (px % PROBE_SIDE)).astype(np.uint32)
    score = (pack_f16(np.where(cand, dist, np.float64(65504.0))).astype(np.uint32) << np.uint32(16)) | np.where(
        cand, lane, np.uint32(0xFFFF)
    )

    # fold to (ty, tx, 64) and take the per-tile minimum
    tiled = score.reshape(ty_n, PROBE_SIDE, tx_n, PROBE_SIDE).transpose(0, 2, 1, 3).reshape(ty_n, tx_n, CELL_COUNT)
    cand_t = cand.reshape(ty_n, PROBE_SIDE, tx_n, PROBE_SIDE).transpose(0, 2, 1, 3).reshape(ty_n, tx_n, CELL_COUNT)
    best = np.argmin(tiled, axis=-1)
    t_idx = np.arange(ty_n)[:, None], np.arange(tx_n)[None, :]
    tile_valid = cand_t[t_idx[0], t_idx[1], best]

    win_lane = best
    win_py = (np.arange(ty_n)[:, None] * PROBE_SIDE + win_lane // PROBE_SIDE).astype(np.int64)
    win_px = (np.arange(tx_n)[None, :] * PROBE_SIDE + win_lane % PROBE_SIDE).astype(np.int64)
    win_py = np.clip(win_py, 0, H - 1)
    win_px = np.clip(win_px, 0, W - 1)

    src_ty = qty.reshape(ty_n, PROBE_SIDE, tx_n, PROBE_SIDE).transpose(0, 2, 1, 3).reshape(ty_n, tx_n, CELL_COUNT)[
        t_idx[0], t_idx[1], best
    ]
    src_tx = qtx.reshape(ty_n, PROBE_SIDE, tx_n, PROBE_SIDE).transpose(0, 2, 1, 3).reshape(ty_n, tx_n, CELL_COUNT)[
        t_idx[0], t_idx[1], best
    ]

    out = ReprojectedGrid(
        valid=tile_valid,
        pixel=np.stack([win_px, win_py], axis=-1).astype(np.int32),
        pos=gbuf.position[win_py, win_px],
        normal=gbuf.normal[win_py, win_px],
        depth=gbuf.depth[win_py, win_px],
        cell_size=calculate_cell_size(gbuf.depth[win_py, win_px], fov_y, W, H),
        radiance=prev_grid.radiance[src_ty, src_tx],
        hitdist=prev_grid.hitdist[src_ty, src_tx],
        sh=prev_grid.sh[src_ty, src_tx],
    )
    # zero out non-winning tiles so stale data cannot leak
    for name in ("pos", "normal", "depth", "cell_size", "radiance", "hitdist", "sh"):
        arr = getattr(out, name)
        arr[~tile_valid] = 0.0
    return out


def patch_spawn_tiles(spawn, reproj, rng):
    """Redirect redundant spawns onto empty tiles (fixed ray budget).

    A spawn whose target tile also reprojected successfully is redundant; each
    empty tile (no reprojection, no spawn aimed at it) steals one such entry
    at random. Collisions resolve last-writer-wins; the losing empty tile
    stays empty this frame.
    """
    ty_n, tx_n = reproj.valid.shape
    targeted = np.zeros((ty_n, tx_n), dtype=bool)
    for k in range(spawn.tile.shape[0]):
        if spawn.valid[k]:
            targeted[spawn.tile[k, 0], spawn.tile[k, 1]] = True

    override = [
        k
        for k in range(spawn.tile.shape[0])
        if spawn.valid[k] and reproj.valid[spawn.tile[k, 0], spawn.tile[k, 1]]
    ]
    empties = [
        (ty, tx)
        for ty in range(ty_n)
        for tx in range(tx_n)
        if not reproj.valid[ty, tx] and not targeted[ty, tx]
    ]
    if not override or not empties:
        return spawn

    for ty, tx in empties:
        k = override[int(rng.integers(0, len(override)))]
        spawn.tile[k] = (ty, tx)
    return spawn


def finalize_spawns(spawn, gbuf, frame_index, cfg, seed):
    """Resolve patched spawn entries to concrete pixels; drop sky tiles.

    Redirected entries need a pixel inside their new tile; it is re-jittered
    with the same per-tile scheme. Returns per-tile (new_spawn mask, pixel).
    """
    ty_n = (gbuf.height + PROBE_SIDE - 1) // PROBE_SIDE
    tx_n = (gbuf.width + PROBE_SIDE - 1) // PROBE_SIDE
    new_mask = np.zeros((ty_n, tx_n), dtype=bool)
    new_pixel = np.zeros((ty_n, tx_n, 2), dtype=np.int32)
    for k in range(spawn.tile.shape[0]):
        if not spawn.valid[k]:
            continue
        ty, tx = spawn.tile[k]
        px, py = spawn.pixel[k]
        if px // PROBE_SIDE != tx or py // PROBE_SIDE != ty:
            jx, jy = _jitter01(frame_index, ty, tx, seed, salt=0x23)
            px, py = _pixel_in_tile(gbuf, ty, tx, jx, jy)
        if gbuf.sky[py, px]:
            continue
        new_mask[ty, tx] = True
        new_pixel[ty, tx] = (px, py)
    return new_mask, new_pixel


def assemble_grid(reproj, new_mask, new_pixel, gbuf, fov_y):
    """Live probe grid for this frame: fresh spawns override reprojections."""
    grid = ProbeGrid.empty(gbuf.width, gbuf.height)
    r = reproj.valid & ~new_mask
    grid.valid = reproj.valid | new_mask
    grid.traced = new_mask.copy()

    grid.pixel[r] = reproj.pixel[r]
    grid.pos[r] = reproj.pos[r]
    grid.normal[r] = reproj.normal[r]
    grid.depth[r] = reproj.depth[r]
    grid.cell_size[r] = reproj.cell_size[r]
    grid.radiance[r] = reproj.radiance[r]
    grid.hitdist[r] = reproj.hitdist[r]
    grid.sh[r] = reproj.sh[r]

    if np.any(new_mask):
        px = new_pixel[new_mask][:, 0]
        py = new_pixel[new_mask][:, 1]
        grid.pixel[new_mask] = new_pixel[new_mask]
        grid.pos[new_mask] = gbuf.position[py, px]
        grid.normal[new_mask] = gbuf.normal[py, px]
        grid.depth[new_mask] = gbuf.depth[py, px]
        grid.cell_size[new_mask] = calculate_cell_size(
            gbuf.depth[py, px], fov_y, gbuf.width, gbuf.height
        )
    return grid


# ---------------------------------------------------------------------------
# Probe mask pyramid
# ---------------------------------------------------------------------------


def build_probe_mask_pyramid(grid):
    """uint32 pyramid of packed probe pixel coords ((y << 16) | x).

    Level 0 is the tile grid; each coarser level keeps the first valid entry
    of its 2x2 children (row-major scan), so any coarse texel lands on an
    actual probe. Empty entries hold MASK_SENTINEL.
    """
    px = grid.pixel[..., 0].astype(np.uint32)
    py = grid.pixel[..., 1].astype(np.uint32)
    level0 = np.where(grid.valid, (py << np.uint32(16)) | px, MASK_SENTINEL)
    levels = [level0]
    cur = level0
    while cur.shape[0] > 1 or cur.shape[1] > 1:
        h, w = cur.shape
        hh, ww = (h + 1) // 2, (w + 1) // 2
        padded = np.full((hh * 2, ww * 2), MASK_SENTINEL, dtype=np.uint32)
        padded[:h, :w] = cur
        c00 = padded[0::2, 0::2]
        c01 = padded[0::2, 1::2]
        c10 = padded[1::2, 0::2]
        c11 = padded[1::2, 1::2]
        nxt = c00.copy()
        for c in (c01, c10, c11):
            nxt = np.where(nxt == MASK_SENTINEL, c, nxt)
        levels.append(nxt)
        cur = nxt
    return levels


def find_closest_probe(pyramid, pixel, offset):
    """Walk the pyramid coarse-ward from pixel//8 + offset.

    Returns the packed probe coords of the first hit, or MASK_SENTINEL; going
    out of bounds at any level aborts the walk (sentinel).
    """
    x = int(pixel[0]) // PROBE_SIDE
    y = int(pixel[1]) // PROBE_SIDE
    ox, oy = int(offset[0]), int(offset[1])
    for level in pyramid:
        lx, ly = x + ox, y + oy
        if lx < 0 or ly < 0 or ly >= level.shape[0] or lx >= level.shape[1]:
            return MASK_SENTINEL
        v = level[ly, lx]
        if v != MASK_SENTINEL:
            return v
        x //= 2
        y //= 2
    return MASK_SENTINEL


def find_closest_probe_batch(pyramid, pixels, offset):
    """Vectorized walk for (N, 2) pixel arrays; one offset for all."""
    pixels = np.asarray(pixels)
    x = pixels[..., 0] // PROBE_SIDE
    y = pixels[..., 1] // PROBE_SIDE
    ox, oy = int(offset[0]), int(offset[1])
    out = np.full(x.shape, MASK_SENTINEL, dtype=np.uint32)
    open_mask = np.ones(x.shape, dtype=bool)
    for level in pyramid:
        lx = x + ox
        ly = y + oy
        inb = (lx >= 0) & (ly >= 0) & (ly < level.shape[0]) & (lx < level.shape[1])
        open_mask = open_mask & inb
        if not np.any(open_mask):
            break
        val = level[np.clip(ly, 0, level.shape[0] - 1), np.clip(lx, 0, level.shape[1] - 1)]
        found = open_mask & (val != MASK_SENTINEL)
        out[found] = val[found]
        open_mask &= ~found
        x = x // 2
        y = y // 2
    return out


# ---------------------------------------------------------------------------
# Reconstruction, guiding, blending
# ---------------------------------------------------------------------------


def reconstruct_hemisphere(probe_pos, probe_normal, sources, cell_size):
    """Parallax-corrected merge of source probes into a new probe's frame.

    `sources` is a list of dicts with pos, normal, radiance (64, 3) and
    hitdist (64,). Source cells are pushed to their world hit points, then
    re-encoded as seen from the new probe; sources off the probe's plane are
    rejected wholesale. Returns (radiance, dist, weight) per cell; weight 0
    marks cells no source reached.
    """
    omega, mu = hemi_cell_table()
    t, b = orthonormal_basis(probe_normal)
    rad = np.zeros((CELL_COUNT, 3))
    dist = np.zeros(CELL_COUNT)
    weight = np.zeros(CELL_COUNT)
    for s in sources:
        plane_dist = abs(float(np.dot(s["pos"] - probe_pos, probe_normal)))
        if plane_dist >= cell_size:
            continue
        st, sb = orthonormal_basis(s["normal"])
        dirs = to_world(st, sb, s["normal"], mu)  # (64, 3) world
        hits = s["pos"] + dirs * s["hitdist"][:, None]
        v = hits - probe_pos
        d = np.linalg.norm(v, axis=-1)
        ok = d > 0.0
        vn = v / np.where(d[:, None] > 0.0, d[:, None], 1.0)
        z = vn @ probe_normal
        ok &= z > 0.0
        if not np.any(ok):
            continue
        local = np.stack([vn @ t, vn @ b, vn @ probe_normal], axis=-1)
        cells = cell_of_direction(local[ok])
        np.add.at(rad, cells, s["radiance"][ok])
        np.add.at(dist, cells, d[ok])
        np.add.at(weight, cells, 1.0)
    nz = weight > 0.0
    rad[nz] /= weight[nz, None]
    dist[nz] /= weight[nz]
    return rad, dist, weight


def build_guiding_cdf(recon_radiance, recon_weight):
    """Inclusive CDF over cell luminance; uniform when there is no signal."""
    w = rel_luminance(recon_radiance) * (recon_weight > 0.0)
    w = np.maximum(w, 0.0)
    total = w.sum()
    if total <= 0.0:
        w = np.ones(CELL_COUNT)
        total = float(CELL_COUNT)
    cdf = np.cumsum(w) / total
    cdf[-1] = 1.0
    return cdf


def sample_guided_rays(cdf, ray_budget, rng):
    """Stratified inverse-CDF draws: cells plus 2D jitter inside each cell.

    With a uniform CDF and ray_budget == 64 this degenerates to exactly one
    ray per cell (full hemisphere coverage).
    """
    # one shared jitter: systematic stratification maximises the number of
    # distinct cells hit per frame, which keeps the radiance backup confined
    # to genuinely low-probability cells
    u = (np.arange(ray_budget) + rng.random()) / ray_budget
    cells = np.searchsorted(cdf, u, side="left").astype(np.int64)
    cells = np.clip(cells, 0, CELL_COUNT - 1)
    jitter = rng.random((ray_budget, 2))
    return cells, jitter


def ray_directions(probe_normal, cells, jitter):
    """World directions for cell ids + intra-cell jitter."""
    e = (np.stack([cells % PROBE_SIDE, cells // PROBE_SIDE], axis=-1) + jitter) / PROBE_SIDE
    local = hemi_oct_decode(e)
    t, b = orthonormal_basis(probe_normal)
    return to_world(t, b, probe_normal, local)


def blend_radiance(cell_radiance, cell_dist, cell_counts, recon_rad, recon_dist, recon_weight, hysteresis_max=0.95):
    """Temporal blend of freshly traced cells against the reconstruction.

    Per cell, alpha = clamp(max(l1 - l2 - min(l1, l2), 0) / max(max(l1, l2),
    1e-4), 0, hmax)^2 with l = mean RGB: identical signals and darkening pass
    through (alpha 0), large brightenings are damped. Untraced cells receive
    the mean of the traced cells (radiance backup) instead of reconstruction.
    """
    traced = cell_counts > 0
    out_rad = np.zeros((CELL_COUNT, 3))
    out_dist = np.zeros(CELL_COUNT)
    has_prev = recon_weight > 0.0

    l1 = cell_radiance @ np.full(3, 1.0 / 3.0)
    l2 = recon_rad @ np.full(3, 1.0 / 3.0)
    num = np.maximum(l1 - l2 - np.minimum(l1, l2), 0.0)
    den = np.maximum(np.maximum(l1, l2), MIN_HYSTERESIS_LUMA)
    alpha = np.clip(num / den, 0.0, hysteresis_max) ** 2
    alpha = np.where(traced & has_prev, alpha, 0.0)

    out_rad[traced] = (
        cell_radiance[traced] * (1.0 - alpha[traced])[:, None]
        + recon_rad[traced] * alpha[traced][:, None]
    )
    out_dist[traced] = cell_dist[traced] * (1.0 - alpha[traced]) + recon_dist[traced] * alpha[traced]

    if np.any(traced):
        backup_rad = out_rad[traced].mean(axis=0)
        backup_dist = out_dist[traced].mean()
        out_rad[~traced] = backup_rad
        # keep the reconstructed distance where one exists: the radiance is
        # approximate either way but the geometry estimate from neighbours is
        # real, and parallax correction needs it next frame
        keep = ~traced & has_prev
        out_dist[keep] = recon_dist[keep]
        out_dist[~traced & ~has_prev] = backup_dist
    return out_rad, out_dist


def temporal_blend(curr, prev, hysteresis_max=0.95):
    """Single-signal form of the hysteresis blend: lerp(curr, prev, alpha)."""
    curr = np.asarray(curr, dtype=np.float64)
    prev = np.asarray(prev, dtype=np.float64)
    l1 = float(curr.mean())
    l2 = float(prev.mean())
    alpha = max(l1 - l2 - min(l1, l2), 0.0) / max(max(l1, l2), MIN_HYSTERESIS_LUMA)
    alpha = min(max(alpha, 0.0), hysteresis_max) ** 2
    return curr * (1.0 - alpha) + prev * alpha


# ---------------------------------------------------------------------------
# Probe filtering (separable over probe rows/columns)
# ---------------------------------------------------------------------------


def depth_weight(plane_dist, cell_size):
    """Plane-distance falloff used by the probe filter."""
    return np.exp(-np.abs(plane_dist) / (0.5 * cell_size))


def _filter_axis(grid, pyramid, axis_dir):
    omega, mu = hemi_cell_table()
    t, b = orthonormal_basis(grid.normal)
    new_rad = grid.radiance.copy()
    new_dist = grid.hitdist.copy()
    tys, txs = np.nonzero(grid.valid)
    for ty, tx in zip(tys, txs):
        p_pos = grid.pos[ty, tx]
        p_nrm = grid.normal[ty, tx]
        csize = grid.cell_size[ty, tx]
        dirs = to_world(t[ty, tx], b[ty, tx], p_nrm, mu)  # (64, 3)
        rad = np.concatenate([grid.radiance[ty, tx], grid.hitdist[ty, tx][:, None]], axis=-1)
        weight = np.ones(CELL_COUNT)
        hit_dist = rad[:, 3].copy()
        for i in range(6):
            step = (((i & 1) << 1) - 1) * ((i >> 1) + 1)  # -1 +1 -2 +2 -3 +3
            packed = find_closest_probe(pyramid, grid.pixel[ty, tx], (axis_dir[0] * step, axis_dir[1] * step))
            if packed == MASK_SENTINEL:
                continue
            qx = int(packed & np.uint32(0xFFFF))
            qy = int(packed >> np.uint32(16))
            qty, qtx = qy // PROBE_SIDE, qx // PROBE_SIDE
            if (qty, qtx) == (ty, tx) or not grid.valid[qty, qtx]:
                continue
            q_pos = grid.pos[qty, qtx]
            q_nrm = grid.normal[qty, qtx]
            plane_dist = abs(float(np.dot(q_pos - p_pos, p_nrm)))
            if plane_dist > csize:
                continue
            normal_check = dirs @ q_nrm  # per cell: is the cell dir in q's hemisphere
            hd_q = grid.hitdist[qty, qtx]
            hd_clamped = np.minimum(hd_q, hit_dist)
            hit_pt = q_pos + dirs * hd_clamped[:, None]
            to_hit = hit_pt - p_pos
            d = np.linalg.norm(to_hit, axis=-1)
            angle_err = np.sum(dirs * to_hit, axis=-1) / np.where(d > 0.0, d, 1.0)
            ok = (normal_check >= 0.0) & (angle_err >= FILTER_ANGLE_COS) & (d > 0.0)
            if not np.any(ok):
                continue
            w = depth_weight(plane_dist, csize)
            contrib = np.concatenate([grid.radiance[qty, qtx], hd_clamped[:, None]], axis=-1)
            rad[ok] += w * contrib[ok]
            weight[ok] += w
            hit_dist = rad[:, 3] / weight
        rad /= weight[:, None]
        new_rad[ty, tx] = rad[:, :3]
        new_dist[ty, tx] = rad[:, 3]
    return new_rad, new_dist


def filter_probes(grid, pyramid):
    """Two separable passes (probe rows, then columns) in place."""
    grid.radiance, grid.hitdist = _filter_axis(grid, pyramid, (1, 0))
    grid.radiance, grid.hitdist = _filter_axis(grid, pyramid, (0, 1))
    return grid


# ---------------------------------------------------------------------------
# Side cache (LRU) for probes evicted by failed same-tile reuse
# ---------------------------------------------------------------------------


class SideCache:
    """Fixed-capacity LRU of off-screen probes.

    Entries store position + packed unit normal (the screen-space position of
    an evicted probe is meaningless next frame) alongside the 64-cell payload.
    The queue holds entry slots in MRU-first order; allocation recycles the
    tail. Scheduled radiance writes follow first-wins semantics per frame and
    are dropped when allocation recycles the target slot in the same frame.
    """

    def __init__(self, capacity):
        self.capacity = int(capacity)
        self.pos = np.zeros((self.capacity, 3))
        self.normal_packed = np.zeros(self.capacity, dtype=np.uint32)
        self.radiance = np.zeros((self.capacity, CELL_COUNT, 3))
        self.hitdist = np.zeros((self.capacity, CELL_COUNT))
        self.queue = []  # slots, MRU first

    def __len__(self):
        return len(self.queue)

    def normals(self, slots):
        return unpack_normal(self.normal_packed[np.asarray(slots, dtype=np.int64)])

    def project_to_tiles(self, camera, tiles_y, tiles_x, per_tile_cap=8):
        """Per-tile entry lists for this frame's reconstruction lookups."""
        lists = {}
        if not self.queue:
            return lists
        slots = np.asarray(self.queue, dtype=np.int64)
        px, dist, valid = camera.project(self.pos[slots])
        for i, slot in enumerate(slots):
            if not valid[i]:
                continue
            tx = int(px[i, 0]) // PROBE_SIDE
            ty = int(px[i, 1]) // PROBE_SIDE
            if 0 <= ty < tiles_y and 0 <= tx < tiles_x:
                lst = lists.setdefault((ty, tx), [])
                if len(lst) < per_tile_cap:
                    lst.append(int(slot))
        return lists

    def gather_neighborhood(self, lists, ty, tx):
        out = []
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                out.extend(lists.get((ty + dy, tx + dx), ()))
        return out


def update_side_cache(side_cache, evictions, matches, refreshes):
    """Apply one frame of side-cache traffic.

    evictions: [(record, matched_slot | None)] where record carries pos,
    normal, radiance, hitdist of the probe whose history was rejected.
    matches/refreshes: [(slot, radiance, hitdist)] scheduled writes for
    matched entries and for best-matching reconstruction participants.
    First write wins per slot; writes into slots recycled by this frame's
    allocations are dropped; touched slots move to MRU in touch order.
    """
    scheduled = {}
    touched = []

    def schedule(slot, rad, dist):
        if slot not in scheduled:
            scheduled[slot] = (rad, dist)
            touched.append(slot)

    allocated = []
    for record, matched in evictions:
        if matched is None:
            if side_cache.capacity == 0:
                continue
            used = set(side_cache.queue) | set(allocated)
            if len(used) >= side_cache.capacity:
                # full: recycle the LRU tail, or the oldest of this frame's
                # own allocations once the queue itself is exhausted
                slot = side_cache.queue.pop() if side_cache.queue else allocated.pop(0)
            else:
                slot = next(s for s in range(side_cache.capacity) if s not in used)
            allocated.append(slot)
            side_cache.pos[slot] = record["pos"]
            side_cache.normal_packed[slot] = pack_normal(record["normal"])
            side_cache.radiance[slot] = record["radiance"]
            side_cache.hitdist[slot] = record["hitdist"]
            scheduled.pop(slot, None)  # earlier write target got recycled
        else:
            schedule(matched, record["radiance"], record["hitdist"])

    for slot, rad, dist in matches + refreshes:
        schedule(slot, rad, dist)

    alloc_set = set(allocated)
    for slot, (rad, dist) in scheduled.items():
        if slot in alloc_set:
            continue  # overwritten by the allocation cursor this frame
        side_cache.radiance[slot] = rad
        side_cache.hitdist[slot] = dist

    # MRU-first reorder: allocations and touched entries ahead, rest stable
    front = []
    seen = set()
    for slot in allocated + touched:
        if slot not in seen:
            front.append(slot)
            seen.add(slot)
    rest = [s for s in side_cache.queue if s not in seen]
    side_cache.queue = front + rest
    return side_cache
