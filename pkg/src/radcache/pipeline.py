"""Frame-loop orchestration of the two-level radiance cache.

Per frame, in dependency order: G-buffer, probe spawn/reprojection/patching,
probe mask pyramid, side-cache screen projection, hemisphere reconstruction
with guided ray sampling, probe ray tracing, secondary-vertex shading (world
cache deposits/queries fed by reservoir light sampling and the temporal
feedback loop), temporal blend, probe-space filtering, side-cache update,
SH projection, per-pixel interpolation, optional horizon-based near-field
occlusion, temporal denoising, and image assembly.

Frames are pure functions of (previous state, config, seed, frame index):
every random draw comes from a generator derived from (seed, frame, pass),
so a sequence is bit-reproducible for a fixed config and seed.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import screen_probes as sp
from .core import ensure_bvh, interpolate_hit, trace_closest
from .gbuffer import render_gbuffer
from .images import compare_images, write_pfm, write_png
from .irradiance import TemporalDenoiser, interpolate_frame, project_probe_to_sh
from .light_sampling import (
    ReservoirHashGrid,
    build_light_grid,
    generate_reservoirs,
    resolve_reservoirs,
    temporal_reuse,
)
from .mathutils import derive_rng, normalize, rel_luminance
from .scene import Light, eval_environment
from .ssgi import combine_near_far, cone_aperture_from_ao, horizon_slice
from .world_cache import WorldCacheGrid, WorldCacheStats


class PassError(Exception):
    """A pipeline pass failed; .pass_name identifies the culprit."""

    def __init__(self, pass_name, message):
        super().__init__(f"pass {pass_name!r} failed: {message}")
        self.pass_name = pass_name


@dataclass
class FrameMetrics:
    frame: int
    pass_ms: dict = field(default_factory=dict)
    probe_rays: int = 0  # live spawn tiles x 64
    shadow_rays: int = 0  # one per resolved reservoir
    spawned_tiles: int = 0
    reprojected_tiles: int = 0
    live_probes: int = 0
    side_cache_entries: int = 0
    cache: WorldCacheStats | None = None
    mean_luminance: float = 0.0
    temporal_delta_max: float = 0.0  # max per-pixel |luma - previous luma|
    temporal_delta_mean: float = 0.0
    rmse_vs_reference: float | None = None

    def as_dict(self):
        d = {
            "frame": self.frame,
            "pass_ms": {k: round(v, 3) for k, v in self.pass_ms.items()},
            "probe_rays": self.probe_rays,
            "shadow_rays": self.shadow_rays,
            "spawned_tiles": self.spawned_tiles,
            "reprojected_tiles": self.reprojected_tiles,
            "live_probes": self.live_probes,
            "side_cache_entries": self.side_cache_entries,
            "mean_luminance": self.mean_luminance,
            "temporal_delta_max": self.temporal_delta_max,
            "temporal_delta_mean": self.temporal_delta_mean,
        }
        if self.cache is not None:
            d["world_cache"] = {
                "inserted": int(self.cache.inserted),
                "overflow": int(self.cache.overflow),
                "evicted": int(self.cache.evicted),
                "live": int(self.cache.live),
                "deposits": int(self.cache.deposits),
                "query_hits": int(self.cache.query_hits),
                "query_misses": int(self.cache.query_misses),
            }
        if self.rmse_vs_reference is not None:
            d["rmse_vs_reference"] = self.rmse_vs_reference
        return d


class PipelineState:
    """Everything carried across frames."""

    def __init__(self, scene, config, width, height, fov_y):
        cfg = config
        tiles_y = (height + sp.PROBE_SIDE - 1) // sp.PROBE_SIDE
        tiles_x = (width + sp.PROBE_SIDE - 1) // sp.PROBE_SIDE
        cap = cfg.screen.side_cache_capacity or tiles_y * tiles_x
        base = cfg.world.base_cell_size or scene.diagonal / 1024.0

        self.grid = sp.ProbeGrid.empty(width, height)
        self.side_cache = sp.SideCache(cap)
        self.world = WorldCacheGrid(cfg.world, base, fov_y, width, height)
        self.reservoir_hash = None  # previous frame's ReservoirHashGrid
        self.denoiser = TemporalDenoiser(width, height, 3, cfg.irradiance, fov_y)
        self.ssgi_denoiser = TemporalDenoiser(width, height, 4, cfg.irradiance, fov_y)
        self.prev_gbuf = None
        self.prev_camera = None
        self.prev_final_irradiance = np.zeros((height, width, 3))
        self.prev_luma = None


def _nee_lights(scene):
    lights = list(scene.lights)
    if scene.environment is not None:
        lights.append(Light(kind="environment"))
    return lights


def _shade_secondary(scene, geom, state, cfg, gbuf, camera, origins, dirs, hits, rng, metrics):
    """Radiance arriving along each probe ray (N, 3) + hit distances (N,).

    Hits deposit into and query the world cache; the deposit is the previous
    frame's final irradiance reprojected to the hit point when valid, else a
    one-shadow-ray reservoir estimate of direct irradiance. Misses evaluate
    the environment and get the sky distance sentinel.
    """
    n = dirs.shape[0]
    radiance = np.zeros((n, 3))
    distance = np.full(n, sp.SKY_DISTANCE)

    miss = ~hits["hit"]
    if np.any(miss):
        radiance[miss] = eval_environment(scene.environment, dirs[miss])

    hit = hits["hit"]
    if not np.any(hit):
        return radiance, distance

    prim = hits["prim"][hit]
    t = hits["t"][hit]
    hpos, hnrm = interpolate_hit(geom, prim, hits["u"][hit], hits["v"][hit])
    hdirs = dirs[hit]
    # two-sided: shade the face the ray arrived at
    facing = np.sum(hnrm * hdirs, axis=-1)
    hnrm = np.where(facing[:, None] > 0.0, -hnrm, hnrm)
    mat = geom.tri_material[prim]
    halbedo = geom.albedo[mat]
    hemissive = geom.emissive[mat]
    distance[hit] = t

    # --- world cache handles -------------------------------------------
    cam_dist = np.linalg.norm(hpos - camera.position, axis=-1)
    words, cell_idx, lod = state.world.descriptors(hpos, hdirs, t, cam_dist)
    stats = metrics.cache
    slots = state.world.find_or_insert(words, stats)
    ok = slots >= 0
    cell_size = state.world.base_cell_size * np.exp2(lod.astype(np.float64))

    # --- direct lighting via reservoirs ---------------------------------
    m = hpos.shape[0]
    eps = 1e-4 * max(scene.diagonal, 1e-6)
    nee_lights = _nee_lights(scene)
    direct = np.zeros((m, 3))
    if nee_lights:
        lgrid = build_light_grid(
            nee_lights,
            hpos,
            scene.environment,
            max_cell_count=cfg.lights.max_cell_count,
            lights_per_cell=cfg.lights.lights_per_cell,
            cull_threshold=cfg.lights.cull_threshold,
        )
        res = generate_reservoirs(
            nee_lights, scene.environment, lgrid, hpos, hnrm, halbedo,
            cfg.lights.candidate_count, rng,
        )
        keys = [
            ReservoirHashGrid.key_of(hpos[i], lod[i], state.world.base_cell_size)
            for i in range(m)
        ]
        res = temporal_reuse(
            res, state.reservoir_hash, keys, hpos, hnrm, halbedo,
            nee_lights, scene.environment, rng,
            m_cap=cfg.lights.m_cap,
        )
        direct, live = resolve_reservoirs(res, geom, hpos, hnrm, eps)
        metrics.shadow_rays += int(np.count_nonzero(live))

        new_hash = ReservoirHashGrid()
        new_hash.store_batch(keys, res, res.W, hnrm, rng)
        state.reservoir_hash = new_hash

    # --- temporal feedback deposit --------------------------------------
    deposit = direct
    if cfg.world.temporal_feedback and state.prev_gbuf is not None:
        pg = state.prev_gbuf
        pix, _, in_front = state.prev_camera.project(hpos)
        qx = np.rint(pix[..., 0]).astype(np.int64)
        qy = np.rint(pix[..., 1]).astype(np.int64)
        inb = in_front & (qx >= 0) & (qx < pg.width) & (qy >= 0) & (qy < pg.height)
        qx = np.clip(qx, 0, pg.width - 1)
        qy = np.clip(qy, 0, pg.height - 1)
        plane = np.abs(np.sum((pg.position[qy, qx] - hpos) * hnrm, axis=-1))
        ndot = np.sum(pg.normal[qy, qx] * hnrm, axis=-1)
        fb_ok = inb & ~pg.sky[qy, qx] & (plane < cell_size) & (ndot > 0.9)
        deposit = np.where(
            fb_ok[:, None], state.prev_final_irradiance[qy, qx], direct
        )

    if np.any(ok):
        state.world.accumulate(slots[ok], cell_idx[ok], deposit[ok], stats)
    cached, found = state.world.query(slots, cell_idx, stats)
    irradiance = np.where(found[:, None], cached, deposit)

    radiance[hit] = hemissive + halbedo / math.pi * irradiance
    return radiance, distance


def _trace_and_blend(scene, geom, state, cfg, gbuf, camera, fov_y, grid, reproj, pyramid, rng, metrics):
    """Reconstruct, guide, trace and blend every freshly spawned probe.

    Returns the refresh list for the side cache: per spawned tile, the best
    matching side-cache participant refreshed with the blended payload.
    """
    tys, txs = np.nonzero(grid.traced)
    n_tiles = tys.shape[0]
    metrics.probe_rays = n_tiles * sp.CELL_COUNT
    metrics.spawned_tiles = n_tiles
    refreshes = []
    if n_tiles == 0:
        return refreshes

    side_lists = state.side_cache.project_to_tiles(camera, grid.valid.shape[0], grid.valid.shape[1])

    recon = []
    all_dirs = np.zeros((n_tiles, sp.CELL_COUNT, 3))
    all_cells = np.zeros((n_tiles, sp.CELL_COUNT), dtype=np.int64)
    origins = np.zeros((n_tiles, sp.CELL_COUNT, 3))
    for k in range(n_tiles):
        ty, tx = int(tys[k]), int(txs[k])
        pos = grid.pos[ty, tx]
        nrm = grid.normal[ty, tx]
        csize = float(grid.cell_size[ty, tx])

        sources = []
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                qy, qx = ty + dy, tx + dx
                if 0 <= qy < reproj.valid.shape[0] and 0 <= qx < reproj.valid.shape[1] and reproj.valid[qy, qx]:
                    sources.append(
                        {
                            "pos": reproj.pos[qy, qx],
                            "normal": reproj.normal[qy, qx],
                            "radiance": reproj.radiance[qy, qx],
                            "hitdist": reproj.hitdist[qy, qx],
                        }
                    )
        participants = []
        for slot in state.side_cache.gather_neighborhood(side_lists, ty, tx):
            s_pos = state.side_cache.pos[slot]
            plane = abs(float(np.dot(s_pos - pos, nrm)))
            if plane >= csize:
                continue
            participants.append((plane, slot))
            sources.append(
                {
                    "pos": s_pos,
                    "normal": state.side_cache.normals([slot])[0],
                    "radiance": state.side_cache.radiance[slot],
                    "hitdist": state.side_cache.hitdist[slot],
                }
            )

        r_rad, r_dist, r_w = sp.reconstruct_hemisphere(pos, nrm, sources, csize)
        recon.append((r_rad, r_dist, r_w, participants))

        if cfg.screen.guiding_enabled:
            cdf = sp.build_guiding_cdf(r_rad, r_w)
        else:
            cdf = sp.build_guiding_cdf(np.zeros((sp.CELL_COUNT, 3)), np.zeros(sp.CELL_COUNT))
        cells, jitter = sp.sample_guided_rays(cdf, sp.CELL_COUNT, rng)
        all_dirs[k] = sp.ray_directions(nrm, cells, jitter)
        all_cells[k] = cells
        origins[k] = pos + nrm * (1e-3 * csize)

    flat_o = origins.reshape(-1, 3)
    flat_d = all_dirs.reshape(-1, 3)
    hits = trace_closest(geom, flat_o, flat_d)
    radiance, distance = _shade_secondary(
        scene, geom, state, cfg, gbuf, camera, flat_o, flat_d, hits, rng, metrics
    )
    radiance = radiance.reshape(n_tiles, sp.CELL_COUNT, 3)
    distance = distance.reshape(n_tiles, sp.CELL_COUNT)

    for k in range(n_tiles):
        ty, tx = int(tys[k]), int(txs[k])
        cell_rad = np.zeros((sp.CELL_COUNT, 3))
        cell_dist = np.zeros(sp.CELL_COUNT)
        counts = np.zeros(sp.CELL_COUNT)
        np.add.at(cell_rad, all_cells[k], radiance[k])
        np.add.at(cell_dist, all_cells[k], distance[k])
        np.add.at(counts, all_cells[k], 1.0)
        nz = counts > 0
        cell_rad[nz] /= counts[nz, None]
        cell_dist[nz] /= counts[nz]

        r_rad, r_dist, r_w, participants = recon[k]
        out_rad, out_dist = sp.blend_radiance(
            cell_rad, cell_dist, counts, r_rad, r_dist, r_w,
            hysteresis_max=cfg.screen.hysteresis_max,
        )
        grid.radiance[ty, tx] = out_rad
        grid.hitdist[ty, tx] = out_dist
        if participants:
            participants.sort(key=lambda pr: (pr[0], pr[1]))
            refreshes.append((participants[0][1], out_rad.copy(), out_dist.copy()))
    return refreshes


def _collect_evictions(state, grid, reproj, gbuf, camera, fov_y):
    """Previous probes whose history died: tile respawned, reprojection failed.

    Each eviction searches the projected side-cache lists for an entry on the
    same plane with an agreeing normal; the closest such entry (by plane
    distance) is updated in place instead of allocating a new one.
    """
    prev = state.grid
    evictions = []
    if not np.any(prev.valid):
        return evictions
    side_lists = state.side_cache.project_to_tiles(camera, prev.valid.shape[0], prev.valid.shape[1])
    dead = prev.valid & grid.traced & ~reproj.valid
    tys, txs = np.nonzero(dead)
    for ty, tx in zip(tys, txs):
        record = {
            "pos": prev.pos[ty, tx],
            "normal": prev.normal[ty, tx],
            "radiance": prev.radiance[ty, tx],
            "hitdist": prev.hitdist[ty, tx],
        }
        csize = float(prev.cell_size[ty, tx])
        best = None
        for slot in state.side_cache.gather_neighborhood(side_lists, int(ty), int(tx)):
            plane = abs(float(np.dot(state.side_cache.pos[slot] - record["pos"], record["normal"])))
            ndot = float(state.side_cache.normals([slot])[0] @ record["normal"])
            if plane < csize and ndot > 0.95:
                if best is None or (plane, slot) < best:
                    best = (plane, slot)
        evictions.append((record, None if best is None else best[1]))
    return evictions


def render_frame(scene, config, state, frame_index, ssgi_on=None, dump=None):
    """One full pipeline frame; mutates state, returns (image, metrics).

    `dump`, when given, is a dict collecting named intermediate buffers.
    """
    cfg = config
    seed = cfg.seed
    metrics = FrameMetrics(frame=frame_index, cache=WorldCacheStats())
    use_ssgi = cfg.ssgi.enabled if ssgi_on is None else ssgi_on

    def clock(name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            out = fn(*args, **kwargs)
        except PassError:
            raise
        except Exception as e:
            raise PassError(name, repr(e)) from e
        metrics.pass_ms[name] = (time.perf_counter() - t0) * 1e3
        return out

    camera = scene.camera_at(frame_index)
    prev_camera = state.prev_camera if state.prev_camera is not None else scene.camera_at(max(frame_index - 1, 0))
    fov_y = camera.fov_y
    geom = scene.geometry_at(frame_index)
    ensure_bvh(geom)

    gbuf = clock("gbuffer", render_gbuffer, scene, frame_index, camera, prev_camera)

    # --- probe placement -------------------------------------------------
    def place():
        rng = derive_rng(seed, frame_index, 0x01)
        spawn = sp.spawn_probes(gbuf, frame_index, cfg, seed)
        reproj = sp.reproject_probes(state.grid, gbuf, fov_y, cfg)
        spawn = sp.patch_spawn_tiles(spawn, reproj, rng)
        new_mask, new_pixel = sp.finalize_spawns(spawn, gbuf, frame_index, cfg, seed)
        grid = sp.assemble_grid(reproj, new_mask, new_pixel, gbuf, fov_y)
        return spawn, reproj, grid

    spawn, reproj, grid = clock("probe_place", place)
    metrics.reprojected_tiles = int(np.count_nonzero(reproj.valid))
    metrics.live_probes = int(np.count_nonzero(grid.valid))

    pyramid = clock("mask_pyramid", sp.build_probe_mask_pyramid, grid)

    # --- trace + shade + blend -------------------------------------------
    rng_trace = derive_rng(seed, frame_index, 0x02)
    refreshes = clock(
        "probe_trace",
        _trace_and_blend,
        scene, geom, state, cfg, gbuf, camera, fov_y, grid, reproj, pyramid,
        rng_trace, metrics,
    )

    # --- probe-space filtering -------------------------------------------
    if cfg.screen.filter_enabled:
        clock("probe_filter", sp.filter_probes, grid, pyramid)

    # --- SH projection for freshly traced probes --------------------------
    def project():
        tys, txs = np.nonzero(grid.traced)
        if tys.size:
            grid.sh[tys, txs] = project_probe_to_sh(
                grid.radiance[tys, txs], grid.normal[tys, txs]
            )

    clock("sh_project", project)

    # --- side cache --------------------------------------------------------
    def side_update():
        evictions = _collect_evictions(state, grid, reproj, gbuf, camera, fov_y)
        sp.update_side_cache(state.side_cache, evictions, [], refreshes)

    clock("side_cache", side_update)
    metrics.side_cache_entries = len(state.side_cache)

    # --- per-pixel interpolation -------------------------------------------
    rng_interp = derive_rng(seed, frame_index, 0x03)
    interp = clock(
        "interpolate",
        interpolate_frame, grid, pyramid, gbuf, fov_y, cfg.irradiance, rng_interp,
    )

    # --- near-field occlusion ----------------------------------------------
    if use_ssgi:
        def ssgi_pass():
            ao, bent = horizon_slice(
                gbuf, fov_y, frame_index, steps=cfg.ssgi.steps, radius=cfg.ssgi.radius
            )
            sample = np.concatenate([ao[..., None], bent], axis=-1)
            filt = state.ssgi_denoiser.step(sample, gbuf, relaxed=None)
            ao_f = np.clip(filt[..., 0], 0.0, 1.0)
            bent_f = normalize(filt[..., 1:4], fallback=None)
            bad = np.linalg.norm(filt[..., 1:4], axis=-1) < 1e-9
            bent_f = np.where(bad[..., None], gbuf.normal, bent_f)
            aperture = cone_aperture_from_ao(ao_f)
            E = combine_near_far(interp.sh, bent_f, aperture, cfg.ssgi.window_strength)
            return np.maximum(E, 0.0), ao_f

        irradiance, ao_dump = clock("ssgi", ssgi_pass)
    else:
        irradiance, ao_dump = interp.irradiance, None

    # --- temporal denoise + image assembly ----------------------------------
    final_E = clock("denoise", state.denoiser.step, irradiance, gbuf, interp.relaxed)
    final_E = np.maximum(final_E, 0.0)

    def assemble():
        img = gbuf.emissive + gbuf.albedo / math.pi * final_E
        if np.any(gbuf.sky):
            img[gbuf.sky] = eval_environment(scene.environment, gbuf.view_dir[gbuf.sky])
        return img

    image = clock("assemble", assemble)

    luma = rel_luminance(image)
    metrics.mean_luminance = float(luma.mean())
    if state.prev_luma is not None and state.prev_luma.shape == luma.shape:
        delta = np.abs(luma - state.prev_luma)
        metrics.temporal_delta_max = float(delta.max())
        metrics.temporal_delta_mean = float(delta.mean())
    state.prev_luma = luma

    state.world.decay_and_evict(metrics.cache)

    if dump is not None:
        dump["gbuffer_albedo"] = gbuf.albedo
        dump["gbuffer_normal"] = gbuf.normal * 0.5 + 0.5
        dump["gbuffer_depth"] = np.where(np.isfinite(gbuf.depth), gbuf.depth, 0.0)
        dump["probe_atlas"] = _atlas_image(grid)
        dump["probe_mask"] = np.where(pyramid[0] != sp.MASK_SENTINEL, 1.0, 0.0)
        dump["interpolated"] = interp.irradiance
        dump["relaxed"] = interp.relaxed.astype(np.float64)
        if ao_dump is not None:
            dump["ssgi_ao"] = ao_dump
        dump["irradiance"] = final_E
        dump["final"] = image

    # roll state
    state.grid = grid
    state.prev_gbuf = gbuf
    state.prev_camera = camera
    state.prev_final_irradiance = final_E
    return image, metrics


def _atlas_image(grid):
    """Probe radiance atlas as one (ty*8, tx*8, 3) image."""
    ty, tx = grid.valid.shape
    atlas = grid.radiance.reshape(ty, tx, sp.PROBE_SIDE, sp.PROBE_SIDE, 3)
    return atlas.transpose(0, 2, 1, 3, 4).reshape(ty * sp.PROBE_SIDE, tx * sp.PROBE_SIDE, 3)


def run_sequence(
    config,
    scene,
    frames=None,
    out_dir=None,
    ssgi_on=None,
    dump_pass=None,
    dump_cache=False,
    dump_lightgrid=False,
    reference_spp=0,
    progress=None,
):
    """Render a frame sequence; returns (images, metrics) lists.

    When out_dir is set, every frame writes frame_%04d.pfm/.png plus a
    metrics.jsonl; dump_pass selects named intermediate buffers to emit as
    PFMs. reference_spp > 0 additionally path-traces the final frame's view
    and reports RMSE in that frame's metrics.
    """
    n_frames = frames if frames is not None else config.frames
    state = PipelineState(
        scene, config, scene.rig.width, scene.rig.height, scene.camera_at(0).fov_y
    )
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    images = []
    all_metrics = []
    metrics_fh = open(os.path.join(out_dir, "metrics.jsonl"), "w") if out_dir else None
    try:
        for f in range(n_frames):
            dump = {} if dump_pass else None
            image, metrics = render_frame(scene, config, state, f, ssgi_on, dump)
            if reference_spp and f == n_frames - 1:
                from .reference import render_reference

                ref = render_reference(scene, f, reference_spp, seed=config.seed + 1)
                stats = compare_images(image, ref)
                metrics.rmse_vs_reference = stats["rmse"]
            images.append(image)
            all_metrics.append(metrics)
            if out_dir:
                write_pfm(os.path.join(out_dir, f"frame_{f:04d}.pfm"), image)
                write_png(os.path.join(out_dir, f"frame_{f:04d}.png"), image)
                if dump is not None:
                    wanted = set(dump_pass) if not isinstance(dump_pass, str) else {dump_pass}
                    for name, buf in dump.items():
                        if "all" in wanted or name in wanted:
                            write_pfm(
                                os.path.join(out_dir, f"{name}_{f:04d}.pfm"),
                                np.asarray(buf, dtype=np.float64),
                            )
                if dump_cache:
                    path = os.path.join(out_dir, f"world_cache_{f:04d}.json")
                    with open(path, "w") as fh:
                        json.dump(metrics.as_dict().get("world_cache", {}), fh, indent=1)
                if metrics_fh:
                    metrics_fh.write(json.dumps(metrics.as_dict()) + "\n")
            if dump_lightgrid and out_dir and f == n_frames - 1:
                _dump_lightgrid(scene, state, os.path.join(out_dir, "lightgrid.json"))
            if progress:
                progress(f, n_frames, metrics)
    finally:
        if metrics_fh:
            metrics_fh.close()
    return images, all_metrics


def _dump_lightgrid(scene, state, path):
    """Light-grid summary over the current view's visible points."""
    gbuf = state.prev_gbuf
    pts = gbuf.position[~gbuf.sky]
    lights = _nee_lights(scene)
    grid = build_light_grid(lights, pts.reshape(-1, 3), scene.environment)
    doc = {
        "origin": grid.origin.tolist(),
        "edge": grid.edge,
        "dims": grid.dims.tolist(),
        "n_lights": grid.n_lights,
        "cells": [
            {
                "cell": int(c),
                "lights": [int(l) for l in grid.cell_lights[c] if l >= 0],
            }
            for c in range(grid.cell_lights.shape[0])
            if grid.cell_count[c] > 0
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def reference_render(scene, frame_index, spp, seed=0, max_bounces=None):
    """Ground-truth path trace of one frame (thin wrapper, see reference.py)."""
    from .reference import render_reference

    return render_reference(scene, frame_index, spp, seed)
