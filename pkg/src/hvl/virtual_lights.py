"""Reflective shadow maps, HVL placement and radius heuristics."""
from __future__ import annotations

import csv
import math
import warnings
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .scene import Scene, SpotLight, cast_rays

# Validity of the Taylor form of tan: within about 0.01 of the true value up
# to this gamma (the error reaches 0.0101 at the limit itself).
TAYLOR_GAMMA_LIMIT = 0.58
# Practical bound on half_angle / sqrt(M): 16 HVLs for a 45 degree spot.
SPACING_LIMIT = 0.2

HvlArrays = namedtuple("HvlArrays", "pos normal flux radius mat to_light")


@dataclass
class RsmBuffer:
    resolution: int
    position: np.ndarray  # (R, R, 3)
    normal: np.ndarray  # (R, R, 3), facing the light
    depth: np.ndarray  # (R, R), distance to the light
    material: np.ndarray  # (R, R) int
    valid: np.ndarray  # (R, R) bool
    light_position: np.ndarray
    half_angle: float

    @property
    def valid_fraction(self) -> float:
        return float(self.valid.mean())


@dataclass
class Hvl:
    position: np.ndarray
    normal: np.ndarray
    flux: np.ndarray
    radius: float
    material: int
    to_light: np.ndarray
    depth: float = 0.0
    cell: tuple[int, int] = (0, 0)
    pixel: tuple[int, int] = (0, 0)


def frustum_directions(frame: np.ndarray, half_angle: float, resolution: int) -> np.ndarray:
    """Unit directions through the centres of a square frustum's pixels, row-major."""
    u, v, w = frame
    t = math.tan(half_angle)
    s = (2.0 * (np.arange(resolution) + 0.5) / resolution - 1.0) * t
    d = w + s[None, :, None] * u + (-s)[:, None, None] * v
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def render_rsm(scene: Scene, light: SpotLight, resolution: int | None = None) -> RsmBuffer:
    """Ray-cast one primary ray per RSM pixel from the light."""
    res = resolution or light.rsm_resolution
    frame = scene.light_frame(light)
    dirs = frustum_directions(frame, light.frustum_half_angle, res).reshape(-1, 3)
    dirs = np.ascontiguousarray(dirs)
    n = dirs.shape[0]
    origins = np.ascontiguousarray(np.broadcast_to(np.asarray(light.position), (n, 3)))
    t = np.empty(n)
    k = np.empty(n, dtype=np.int64)
    p = np.zeros((n, 3))
    nrm = np.zeros((n, 3))
    cast_rays(scene.geometry, origins, dirs, 0.0, t, k, p, nrm)
    valid = k >= 0
    # two-sided surfaces: the lit side faces the light
    flip = np.einsum("ij,ij->i", nrm, dirs) > 0.0
    nrm[flip] *= -1.0
    mat = np.where(valid, scene.geometry.mat[np.maximum(k, 0)], -1)
    depth = np.where(valid, t, 0.0)
    return RsmBuffer(
        res,
        p.reshape(res, res, 3),
        nrm.reshape(res, res, 3),
        depth.reshape(res, res),
        mat.reshape(res, res),
        valid.reshape(res, res),
        np.asarray(light.position, dtype=np.float64),
        light.half_angle,
    )


def radius_r2(half_angle: float, count: int, depth: float, k: float = 1.0) -> float:
    """Depth-proportional radius from the angular spacing of diagonal neighbours."""
    gamma = math.sqrt(2.0) * half_angle / math.sqrt(count)
    if gamma > TAYLOR_GAMMA_LIMIT or half_angle / math.sqrt(count) > SPACING_LIMIT:
        warnings.warn(
            f"{count} HVLs for a {math.degrees(half_angle):.1f} degree spot (gamma={gamma:.3f}): "
            "too few for the tan approximation",
            stacklevel=2,
        )
    return depth * (gamma + gamma**3 / 3.0) * k


def _group_bounds(resolution: int, groups: int) -> list[tuple[int, int]]:
    return [(g * resolution // groups, (g + 1) * resolution // groups) for g in range(groups)]


def place(rsm: RsmBuffer, count: int) -> np.ndarray:
    """Pick one RSM pixel per group of a floor(sqrt(count))^2 grid.

    Returns a (g, g, 2) array of pixel coordinates, -1 where a group holds
    no valid pixel. The group centre is used when valid, otherwise the
    nearest valid pixel of the group (ties broken in scan order).
    """
    g = int(math.isqrt(count))
    if g < 1:
        raise ValueError("need at least one HVL")
    if g > rsm.resolution:
        raise ValueError(f"{g}x{g} grid does not fit a {rsm.resolution}^2 RSM")
    bounds = _group_bounds(rsm.resolution, g)
    cells = np.full((g, g, 2), -1, dtype=np.int64)
    for gi, (r0, r1) in enumerate(bounds):
        for gj, (c0, c1) in enumerate(bounds):
            ci = r0 + (r1 - r0) // 2
            cj = c0 + (c1 - c0) // 2
            if rsm.valid[ci, cj]:
                cells[gi, gj] = (ci, cj)
                continue
            rows, cols = np.nonzero(rsm.valid[r0:r1, c0:c1])
            if rows.size == 0:
                continue
            d2 = (rows + r0 - ci) ** 2 + (cols + c0 - cj) ** 2
            best = int(np.argmin(d2))  # argmin returns the first in scan order
            cells[gi, gj] = (rows[best] + r0, cols[best] + c0)
    return cells


def radius_r1(rsm: RsmBuffer, cells: np.ndarray, cell: tuple[int, int], k: float, eps: float) -> float | None:
    """Depth-weighted mean distance to the 8-connected neighbours in the HVL grid.

    Returns None when no neighbour exists, so the caller can fall back to r2.
    """
    gi, gj = cell
    i, j = cells[gi, gj]
    p = rsm.position[i, j]
    d = rsm.depth[i, j]
    num = 0.0
    den = 0.0
    g = cells.shape[0]
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            ni, nj = gi + di, gj + dj
            if not (0 <= ni < g and 0 <= nj < g) or cells[ni, nj, 0] < 0:
                continue
            pi, pj = cells[ni, nj]
            w = 1.0 / (abs(d - rsm.depth[pi, pj]) + eps)
            num += w * float(np.linalg.norm(p - rsm.position[pi, pj]))
            den += w
    if den == 0.0:
        return None
    return num / den * k


def parse_radius_mode(mode: str) -> tuple[str, float]:
    if mode in ("r1", "r2"):
        return mode, 0.0
    if mode.startswith("fixed:"):
        try:
            value = float(mode.split(":", 1)[1])
        except ValueError as exc:
            raise ValueError(f"bad fixed radius in {mode!r}") from exc
        if value <= 0.0:
            raise ValueError("fixed radius must be positive")
        return "fixed", value
    raise ValueError(f"unknown radius mode {mode!r}")


def distribute(
    rsm: RsmBuffer,
    count: int,
    light_flux,
    radius: str = "r2",
    k: float = 1.0,
    eps: float = 1e-3,
) -> list[Hvl]:
    """Place HVLs uniformly on the RSM and share the light's flux among them."""
    mode, fixed = parse_radius_mode(radius)
    if count > int(rsm.valid.sum()):
        raise ValueError(f"{count} HVLs requested but the RSM has {int(rsm.valid.sum())} valid pixels")
    cells = place(rsm, count)
    g = cells.shape[0]
    occupied = [(gi, gj) for gi in range(g) for gj in range(g) if cells[gi, gj, 0] >= 0]
    if not occupied:
        raise ValueError("no valid RSM pixel in any group")
    flux = np.asarray(light_flux, dtype=np.float64) / len(occupied)
    hvls = []
    for gi, gj in occupied:
        i, j = cells[gi, gj]
        depth = float(rsm.depth[i, j])
        if mode == "fixed":
            r = fixed
        else:
            r = radius_r1(rsm, cells, (gi, gj), k, eps) if mode == "r1" else None
            if r is None:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    r = radius_r2(rsm.half_angle, g * g, depth, k)
        pos = rsm.position[i, j].copy()
        to_light = rsm.light_position - pos
        to_light /= np.linalg.norm(to_light)
        hvls.append(
            Hvl(pos, rsm.normal[i, j].copy(), flux.copy(), float(r), int(rsm.material[i, j]),
                to_light, depth, (gi, gj), (int(i), int(j)))
        )
    return hvls


def pack_hvls(hvls: list[Hvl]) -> HvlArrays:
    if not hvls:
        z3 = np.zeros((0, 3))
        return HvlArrays(z3, z3, z3, np.zeros(0), np.zeros(0, dtype=np.int64), z3)
    return HvlArrays(
        pos=np.ascontiguousarray([h.position for h in hvls], dtype=np.float64),
        normal=np.ascontiguousarray([h.normal for h in hvls], dtype=np.float64),
        flux=np.ascontiguousarray([h.flux for h in hvls], dtype=np.float64),
        radius=np.ascontiguousarray([h.radius for h in hvls], dtype=np.float64),
        mat=np.ascontiguousarray([h.material for h in hvls], dtype=np.int64),
        to_light=np.ascontiguousarray([h.to_light for h in hvls], dtype=np.float64),
    )


def concat_hvls(packs: list[HvlArrays]) -> HvlArrays:
    if not packs:
        return pack_hvls([])
    return HvlArrays(*(np.ascontiguousarray(np.concatenate(parts)) for parts in zip(*packs)))


def write_hvl_csv(hvls: list[Hvl], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x", "y", "z", "nx", "ny", "nz", "radius", "flux_r", "flux_g", "flux_b"])
        for i, h in enumerate(hvls):
            w.writerow([i, *(f"{v:.9g}" for v in (*h.position, *h.normal, h.radius, *h.flux))])
