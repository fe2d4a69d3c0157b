"""Whole-image rendering: G-buffer, HVL distribution and row-parallel gathering."""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import shading as S
from .imaging import Image
from .scene import Scene, cast_rays
from .virtual_lights import Hvl, distribute, pack_hvls, render_rsm


@dataclass
class GBuffer:
    position: np.ndarray  # (H, W, 3)
    normal: np.ndarray  # (H, W, 3), facing the camera
    wo: np.ndarray  # (H, W, 3)
    material: np.ndarray  # (H, W), -1 where the ray escapes


@dataclass
class RenderResult:
    image: Image
    direct: Image
    indirect: Image
    hvls: list = field(default_factory=list)
    timings_ms: dict = field(default_factory=dict)


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("HVL_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return threads


def gbuffer(scene: Scene) -> GBuffer:
    cam = scene.camera
    dirs = np.ascontiguousarray(cam.ray_directions().reshape(-1, 3))
    n = dirs.shape[0]
    origins = np.ascontiguousarray(np.broadcast_to(np.asarray(cam.position, dtype=np.float64), (n, 3)))
    t = np.empty(n)
    k = np.empty(n, dtype=np.int64)
    p = np.zeros((n, 3))
    nrm = np.zeros((n, 3))
    cast_rays(scene.geometry, origins, dirs, 0.0, t, k, p, nrm)
    flip = np.einsum("ij,ij->i", nrm, dirs) > 0.0
    nrm[flip] *= -1.0
    mat = np.where(k >= 0, scene.geometry.mat[np.maximum(k, 0)], -1)
    shape = (cam.height, cam.width)
    return GBuffer(p.reshape(*shape, 3), nrm.reshape(*shape, 3), (-dirs).reshape(*shape, 3),
                   mat.reshape(shape))


# ---------------------------------------------------------------------------
# row kernels (one image row per call; rows are independent)


@njit(cache=True, nogil=True)
def _row_hvl(row, gb_p, gb_n, gb_o, gb_m, hp, hn, hu, hv, hb, flux, rad, hmat, f, fp, ng, ne, out):
    px = np.empty(3)
    for c in range(gb_p.shape[1]):
        if gb_m[row, c] < 0:
            continue
        S.hvl_gather(gb_p[row, c], gb_n[row, c], gb_o[row, c], gb_m[row, c], hp, hn, hu, hv, hb,
                     flux, rad, hmat, f, fp, ng, ne, px)
        out[row, c] = px


@njit(cache=True, nogil=True)
def _row_hvl_zh(row, gb_p, gb_n, gb_o, gb_m, hp, hn, hl, flux, rad, hmat, params, lobe, ng, out):
    px = np.empty(3)
    for c in range(gb_p.shape[1]):
        if gb_m[row, c] < 0:
            continue
        S.hvl_gather_zh(gb_p[row, c], gb_n[row, c], gb_o[row, c], gb_m[row, c], hp, hn, hl, flux,
                        rad, hmat, params, lobe, ng, px)
        out[row, c] = px


@njit(cache=True, nogil=True)
def _row_vpl(row, gb_p, gb_n, gb_o, gb_m, hp, hn, hl, flux, hmat, params, clamp, out):
    px = np.empty(3)
    for c in range(gb_p.shape[1]):
        if gb_m[row, c] < 0:
            continue
        S.vpl_gather(gb_p[row, c], gb_n[row, c], gb_o[row, c], gb_m[row, c], hp, hn, hl, flux,
                     hmat, params, clamp, px)
        out[row, c] = px


@njit(cache=True, nogil=True)
def _row_vsl(row, gb_p, gb_n, gb_o, gb_m, hp, hn, hl, flux, rad, hmat, params, su, sc, ss, out):
    px = np.empty(3)
    for c in range(gb_p.shape[1]):
        if gb_m[row, c] < 0:
            continue
        S.vsl_gather(gb_p[row, c], gb_n[row, c], gb_o[row, c], gb_m[row, c], hp, hn, hl, flux,
                     rad, hmat, params, su, sc, ss, px)
        out[row, c] = px


@njit(cache=True, nogil=True)
def _row_path(row, g, eps, gb_p, gb_n, gb_o, gb_m, params, lpos, lframe, ltan, lpow, rnd, vis, out):
    px = np.empty(3)
    for c in range(gb_p.shape[1]):
        if gb_m[row, c] < 0:
            continue
        S.path_shade(g, eps, gb_p[row, c], gb_n[row, c], gb_o[row, c], gb_m[row, c], params,
                     lpos, lframe, ltan, lpow, rnd[c], vis, px)
        out[row, c] = px


@njit(cache=True, nogil=True)
def _row_direct(row, g, eps, gb_p, gb_n, gb_o, gb_m, lpos, lframe, ltan, lpow, f, ng, shadows, out):
    px = np.empty(3)
    for c in range(gb_p.shape[1]):
        if gb_m[row, c] < 0:
            continue
        S.direct_shade(g, eps, gb_p[row, c], gb_n[row, c], gb_o[row, c], gb_m[row, c], lpos,
                       lframe, ltan, lpow, f, ng, shadows, px)
        out[row, c] = px


def _run_rows(height: int, threads: int, fn) -> None:
    if threads == 1:
        for r in range(height):
            fn(r)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(fn, range(height)))


# ---------------------------------------------------------------------------


def distribute_all(scene: Scene, count: int, radius: str = "r2", k: float = 1.0) -> list[Hvl]:
    """HVLs for every primary light; ``count`` per light."""
    eps = 1e-3 * scene.diagonal
    hvls = []
    for light in scene.lights:
        rsm = render_rsm(scene, light)
        hvls.extend(distribute(rsm, count, light.power, radius=radius, k=k, eps=eps))
    return hvls


def render_indirect(scene: Scene, cfg: S.GatherConfig, gb: GBuffer, hvls, tables: S.MaterialTables,
                    threads: int = 1) -> np.ndarray:
    h, w = gb.material.shape
    out = np.zeros((h, w, 3))
    args = (gb.position, gb.normal, gb.wo, gb.material)
    mode = cfg.mode
    if mode == "direct":
        return out
    if mode == "path":
        la = S.pack_lights(scene)
        g, eps = scene.geometry, scene.epsilon

        def fn(r):
            rnd = S.path_randoms(cfg.seed, r, w, cfg.path_samples)
            _row_path(r, g, eps, *args, tables.params, la.pos, la.frame, la.tan, la.power, rnd,
                      cfg.visibility, out)

        _run_rows(h, threads, fn)
        return out
    ha = hvls if isinstance(hvls, S.HvlArrays) else pack_hvls(list(hvls))
    if ha.pos.shape[0] == 0:
        return out
    if mode == "hvl":
        hu, hv, hb = S.hvl_frames(ha.normal, ha.to_light, tables.fp.shape[1])

        def fn(r):
            _row_hvl(r, *args, ha.pos, ha.normal, hu, hv, hb, ha.flux, ha.radius, ha.mat,
                     tables.f, tables.fp, tables.bands_gather, tables.bands_emission, out)
    elif mode == "hvl-zh":
        bad = sorted({int(m) for m in np.unique(gb.material) if m >= 0
                      and not tables.materials[m].zh_compatible})
        if bad:
            raise ValueError(f"materials {bad} are not lambertian or phong; hvl-zh cannot shade them")

        def fn(r):
            _row_hvl_zh(r, *args, ha.pos, ha.normal, ha.to_light, ha.flux, ha.radius, ha.mat,
                        tables.params, tables.lobe, tables.bands_gather, out)
    elif mode == "vpl":
        clamp = cfg.vpl_clamp or 0.0

        def fn(r):
            _row_vpl(r, *args, ha.pos, ha.normal, ha.to_light, ha.flux, ha.mat, tables.params,
                     clamp, out)
    elif mode == "vsl":
        su, sc, ss = S.cone_samples(cfg.vsl_samples, cfg.seed)

        def fn(r):
            _row_vsl(r, *args, ha.pos, ha.normal, ha.to_light, ha.flux, ha.radius, ha.mat,
                     tables.params, su, sc, ss, out)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    _run_rows(h, threads, fn)
    return out


def render_direct(scene: Scene, cfg: S.GatherConfig, gb: GBuffer, tables: S.MaterialTables,
                  threads: int = 1) -> np.ndarray:
    h, w = gb.material.shape
    out = np.zeros((h, w, 3))
    la = S.pack_lights(scene)
    g, eps = scene.geometry, scene.epsilon

    def fn(r):
        _row_direct(r, g, eps, gb.position, gb.normal, gb.wo, gb.material, la.pos, la.frame,
                    la.tan, la.power, tables.f, tables.bands_gather, cfg.shadows, out)

    _run_rows(h, threads, fn)
    return out


def render(scene: Scene, cfg: S.GatherConfig, hvl_count: int = 400, radius: str = "r2",
           k: float = 1.0, threads: int | None = None, indirect_only: bool = False,
           hvls=None) -> RenderResult:
    """Render one frame; ``hvls`` may be supplied to skip the RSM stages."""
    threads = resolve_threads(threads)
    t_start = time.perf_counter()
    timings = {"rsm": 0.0, "distribute": 0.0, "direct": 0.0, "indirect": 0.0}
    tables = S.MaterialTables.build(scene.materials, cfg.bands_gather, cfg.bands_emission)
    gb = gbuffer(scene)
    needs_hvls = cfg.mode in ("hvl", "hvl-zh", "vpl", "vsl")
    if needs_hvls and hvls is None:
        eps = 1e-3 * scene.diagonal
        hvls = []
        for light in scene.lights:
            t0 = time.perf_counter()
            rsm = render_rsm(scene, light)
            t1 = time.perf_counter()
            hvls.extend(distribute(rsm, hvl_count, light.power, radius=radius, k=k, eps=eps))
            t2 = time.perf_counter()
            timings["rsm"] += (t1 - t0) * 1e3
            timings["distribute"] += (t2 - t1) * 1e3
    hvls = hvls if hvls is not None else []
    direct = np.zeros((scene.camera.height, scene.camera.width, 3))
    if not indirect_only:
        t0 = time.perf_counter()
        direct = render_direct(scene, cfg, gb, tables, threads)
        timings["direct"] = (time.perf_counter() - t0) * 1e3
    t0 = time.perf_counter()
    indirect = render_indirect(scene, cfg, gb, hvls, tables, threads)
    if cfg.mode != "direct":
        timings["indirect"] = (time.perf_counter() - t0) * 1e3
    timings["total"] = (time.perf_counter() - t_start) * 1e3
    return RenderResult(Image(direct + indirect), Image(direct), Image(indirect),
                        hvls if isinstance(hvls, list) else [], timings)
