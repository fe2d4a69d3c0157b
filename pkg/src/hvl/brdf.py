"""Parametric BRDFs and their tabulated SH projections."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from numpy.polynomial.legendre import leggauss

from . import sh

LAMBERTIAN = 0
GGX = 1
PHONG = 2
KINDS = {"lambertian": LAMBERTIAN, "ggx": GGX, "phong": PHONG}

# packed parameter layout used by compiled kernels
P_KIND, P_R, P_G, P_B, P_ROUGH, P_ETA, P_F0, P_EXP = range(8)
N_PARAMS = 8

CACHE_MAGIC = b"HVLB"
CACHE_VERSION = 1


def fresnel_dielectric(cos_i: float, eta: float) -> float:
    return _fresnel(cos_i, eta)


@dataclass(frozen=True)
class BrdfModel:
    """A parametric reflectance model.

    ``ggx`` is a single microfacet lobe tinted by ``albedo`` with exact
    dielectric Fresnel and height-correlated Smith masking. ``phong`` is a
    diffuse base plus a normalized Phong lobe about the mirror direction,
    weighted by the normal-incidence Fresnel of ``eta``; its exponent comes
    from ``roughness`` via ``2/r^2 - 2``. Only lambertian and phong have a
    circularly symmetric lobe.
    """

    kind: str = "lambertian"
    albedo: tuple[float, float, float] = (0.5, 0.5, 0.5)
    roughness: float = 0.5
    eta: float = 1.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown BRDF kind {self.kind!r}")
        alb = tuple(float(a) for a in self.albedo)
        if len(alb) != 3 or any(not 0.0 <= a <= 1.0 for a in alb):
            raise ValueError(f"albedo must be 3 values in [0, 1], got {self.albedo}")
        object.__setattr__(self, "albedo", alb)
        if not 0.0 < self.roughness <= 1.0:
            raise ValueError("roughness must lie in (0, 1]")
        if self.eta <= 1.0:
            raise ValueError("eta must exceed 1")

    @property
    def zh_compatible(self) -> bool:
        return self.kind in ("lambertian", "phong")

    @property
    def specular_weight(self) -> float:
        return ((self.eta - 1.0) / (self.eta + 1.0)) ** 2

    @property
    def phong_exponent(self) -> float:
        return max(0.0, 2.0 / self.roughness**2 - 2.0)

    def packed(self) -> np.ndarray:
        p = np.zeros(N_PARAMS)
        p[P_KIND] = KINDS[self.kind]
        p[P_R : P_B + 1] = self.albedo
        p[P_ROUGH] = self.roughness
        p[P_ETA] = self.eta
        p[P_F0] = self.specular_weight
        p[P_EXP] = self.phong_exponent
        return p


def pack_materials(models) -> np.ndarray:
    return np.stack([m.packed() for m in models]) if models else np.zeros((0, N_PARAMS))


# ---------------------------------------------------------------------------
# compiled evaluation


@njit(cache=True, nogil=True)
def _fresnel(cos_i, eta):
    c = abs(cos_i)
    g2 = eta * eta - 1.0 + c * c
    if g2 <= 0.0:
        return 1.0
    g = math.sqrt(g2)
    a = (g - c) / (g + c)
    b = (c * (g + c) - 1.0) / (c * (g - c) + 1.0)
    return 0.5 * a * a * (1.0 + b * b)


@njit(cache=True, nogil=True)
def _smith_lambda(cos_t, alpha2):
    c2 = cos_t * cos_t
    tan2 = max(0.0, 1.0 - c2) / c2
    return 0.5 * (-1.0 + math.sqrt(1.0 + alpha2 * tan2))


@njit(cache=True, nogil=True)
def brdf_eval(p, nx, ny, nz, ix, iy, iz, ox, oy, oz, out):
    """Write the RGB BRDF value for incident (ix, iy, iz) and outgoing (ox, oy, oz)."""
    ci = nx * ix + ny * iy + nz * iz
    co = nx * ox + ny * oy + nz * oz
    if ci <= 0.0 or co <= 0.0:
        out[0] = 0.0
        out[1] = 0.0
        out[2] = 0.0
        return
    kind = int(p[0])
    if kind == 0:
        s = 1.0 / math.pi
        out[0] = p[1] * s
        out[1] = p[2] * s
        out[2] = p[3] * s
        return
    if kind == 1:
        alpha = p[4]
        a2 = alpha * alpha
        hx = ix + ox
        hy = iy + oy
        hz = iz + oz
        hl = math.sqrt(hx * hx + hy * hy + hz * hz)
        hx /= hl
        hy /= hl
        hz /= hl
        ch = nx * hx + ny * hy + nz * hz
        t = ch * ch * (a2 - 1.0) + 1.0
        d = a2 / (math.pi * t * t)
        g = 1.0 / (1.0 + _smith_lambda(ci, a2) + _smith_lambda(co, a2))
        # symmetric in (wi, wo) so reciprocity holds to rounding
        cd = 0.5 * ((hx * ix + hy * iy + hz * iz) + (hx * ox + hy * oy + hz * oz))
        f = _fresnel(cd, p[5])
        s = f * d * g / (4.0 * ci * co)
        out[0] = p[1] * s
        out[1] = p[2] * s
        out[2] = p[3] * s
        return
    # phong: mirror of wo about n, dotted with wi
    rdot = 2.0 * co * ci - (ox * ix + oy * iy + oz * iz)
    lobe = 0.0
    if rdot > 0.0:
        e = p[7]
        lobe = p[6] * (e + 2.0) / (2.0 * math.pi) * rdot**e
    kd = (1.0 - p[6]) / math.pi
    out[0] = p[1] * kd + lobe
    out[1] = p[2] * kd + lobe
    out[2] = p[3] * kd + lobe


@njit(cache=True, nogil=True)
def _brdf_eval_many(p, n, wi, wo, out):
    for k in range(wi.shape[0]):
        brdf_eval(p, n[0], n[1], n[2], wi[k, 0], wi[k, 1], wi[k, 2],
                  wo[k, 0], wo[k, 1], wo[k, 2], out[k])


def eval_brdf(model: BrdfModel, wi, wo, n=(0.0, 0.0, 1.0)) -> np.ndarray:
    """RGB BRDF value(s); ``wi``/``wo`` may be single vectors or (k, 3) arrays."""
    wi = np.asarray(wi, dtype=np.float64)
    wo = np.asarray(wo, dtype=np.float64)
    single = wi.ndim == 1 and wo.ndim == 1
    wi2 = np.ascontiguousarray(np.atleast_2d(wi))
    wo2 = np.ascontiguousarray(np.broadcast_to(np.atleast_2d(wo), wi2.shape))
    out = np.empty((wi2.shape[0], 3))
    _brdf_eval_many(model.packed(), np.asarray(n, dtype=np.float64), wi2, wo2, out)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# tabulation


@dataclass
class BrdfTable:
    """SH projections of one BRDF for ``theta_steps`` outgoing elevations.

    ``entries_f`` holds cos(theta_i) * f_s, ``entries_fprime`` holds f_s
    alone, both shaped (theta_steps, 3, bands**2) in the local frame where
    the normal is +z and the outgoing direction sits at phi = 0.
    """

    bands: int
    theta_steps: int
    entries_f: np.ndarray
    entries_fprime: np.ndarray
    channels: int = field(default=3)

    def bin_of(self, theta_o: float) -> int:
        step = (math.pi / 2) / self.theta_steps
        return min(max(int(math.floor(theta_o / step + 0.5)), 0), self.theta_steps - 1)

    def lookup(self, theta_o: float, primed: bool = False) -> np.ndarray:
        entries = self.entries_fprime if primed else self.entries_f
        return entries[self.bin_of(theta_o)]


def lookup(table: BrdfTable, theta_o: float, primed: bool = False) -> np.ndarray:
    return table.lookup(theta_o, primed)


def _hemisphere_nodes(n_theta: int, n_phi: int):
    x, w = leggauss(n_theta)
    z = 0.5 * (x + 1.0)
    wz = 0.5 * w
    phi = (np.arange(n_phi) + 0.5) * (2.0 * math.pi / n_phi)
    s = np.sqrt(1.0 - z * z)
    dirs = np.stack(
        [
            s[:, None] * np.cos(phi)[None, :],
            s[:, None] * np.sin(phi)[None, :],
            np.broadcast_to(z[:, None], (n_theta, n_phi)),
        ],
        axis=-1,
    ).reshape(-1, 3)
    weights = np.repeat(wz * (2.0 * math.pi / n_phi), n_phi)
    return dirs, weights


def tabulate(
    model: BrdfModel,
    bands: int,
    theta_steps: int = 90,
    n_theta: int | None = None,
    n_phi: int | None = None,
    window: bool = True,
) -> BrdfTable:
    """Project the BRDF onto SH for each sampled outgoing elevation.

    F' is the projection of f_s mirrored across the tangent plane
    (f'(x, y, z) = f(x, y, |z|)); the HVL geometric factor zeroes the lower
    hemisphere anyway, and the even extension removes the horizon jump.
    """
    if bands < 1 or theta_steps < 1:
        raise ValueError("bands and theta_steps must be >= 1")
    if n_theta is None:
        n_theta = max(48, 4 * bands) if model.kind == "lambertian" else max(96, 6 * bands)
    if n_phi is None:
        n_phi = max(8, 4 * bands) if model.kind == "lambertian" else max(192, 8 * bands)
    dirs, w = _hemisphere_nodes(n_theta, n_phi)
    basis = sh.sh_eval(bands, dirs)
    ls = np.repeat(np.arange(bands), 2 * np.arange(bands) + 1)
    ms = np.concatenate([np.arange(-l, l + 1) for l in range(bands)])
    mirror = 1.0 + (-1.0) ** ((ls + ms) % 2)
    n = np.array([0.0, 0.0, 1.0])
    f_all = np.empty((theta_steps, 3, bands * bands))
    fp_all = np.empty_like(f_all)
    p = model.packed()
    vals = np.empty((dirs.shape[0], 3))
    for i in range(theta_steps):
        t = i * (math.pi / 2) / theta_steps
        wo = np.array([math.sin(t), 0.0, math.cos(t)])
        _brdf_eval_many(p, n, dirs, np.ascontiguousarray(np.broadcast_to(wo, dirs.shape)), vals)
        weighted = vals * w[:, None]
        fp_all[i] = (weighted.T @ basis) * mirror
        f_all[i] = (weighted * dirs[:, 2:3]).T @ basis
    if window:
        f_all = sh.window_coeffs(f_all)
        fp_all = sh.window_coeffs(fp_all)
    return BrdfTable(bands, theta_steps, f_all, fp_all)


def stack_tables(tables, primed: bool) -> np.ndarray:
    """(n_materials, theta_steps, 3, bands**2) array for the compiled kernels."""
    return np.ascontiguousarray(
        np.stack([t.entries_fprime if primed else t.entries_f for t in tables])
    )


# ---------------------------------------------------------------------------
# on-disk cache


def save_table(table: BrdfTable, path) -> None:
    header = CACHE_MAGIC + struct.pack(
        "<IIII", CACHE_VERSION, table.bands, table.theta_steps, table.channels
    )
    body = np.concatenate([table.entries_f.ravel(), table.entries_fprime.ravel()])
    Path(path).write_bytes(header + body.astype("<f4").tobytes())


def load_table(path) -> BrdfTable:
    data = Path(path).read_bytes()
    if len(data) < 20 or data[:4] != CACHE_MAGIC:
        raise ValueError(f"{path}: not a BRDF table cache")
    version, bands, steps, channels = struct.unpack("<IIII", data[4:20])
    if version != CACHE_VERSION:
        raise ValueError(f"{path}: unsupported cache version {version}")
    count = steps * channels * bands * bands
    body = np.frombuffer(data, dtype="<f4", offset=20)
    if body.size != 2 * count:
        raise ValueError(f"{path}: expected {2 * count} coefficients, found {body.size}")
    shape = (steps, channels, bands * bands)
    f = body[:count].astype(np.float64).reshape(shape)
    fp = body[count:].astype(np.float64).reshape(shape)
    return BrdfTable(bands, steps, f, fp, channels)
