"""Lighting estimators: HVL gathering, direct SH lighting and the baselines.

Every estimator has a compiled per-fragment kernel; the Python functions
below wrap those kernels for single shade points, and ``hvl.pipeline`` runs
them over whole images.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from numpy.polynomial.legendre import leggauss

from . import sh
from .brdf import BrdfModel, brdf_eval, pack_materials, tabulate
from .scene import Scene, SpotLight, bvh_all, bvh_any, bvh_nearest, shading_normal
from .virtual_lights import Hvl, HvlArrays, pack_hvls

MODES = ("hvl", "hvl-zh", "vpl", "vsl", "path", "direct")
INV_PI = 1.0 / math.pi
MAX_HITS = 64


@dataclass
class ShadePoint:
    x: np.ndarray
    n: np.ndarray
    wo: np.ndarray
    material: int = 0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.n = sh.normalize(self.n)
        self.wo = sh.normalize(self.wo)


@dataclass
class GatherConfig:
    bands_emission: int = 3
    bands_gather: int = 5
    mode: str = "hvl"
    vsl_samples: int = 25
    path_samples: int = 256
    vpl_clamp: float | None = None
    seed: int = 0
    visibility: bool = False  # x-to-y visibility in the path oracle
    shadows: bool = True  # primary-light shadows in direct lighting

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if min(self.bands_emission, self.bands_gather) < 1:
            raise ValueError("band counts must be >= 1")
        if max(self.bands_emission, self.bands_gather) > sh.MAX_BANDS:
            raise ValueError(f"band counts must be <= {sh.MAX_BANDS}")
        if min(self.vsl_samples, self.path_samples) < 1:
            raise ValueError("sample counts must be >= 1")


# ---------------------------------------------------------------------------
# material tables


@functools.lru_cache(maxsize=64)
def cached_table(model: BrdfModel, bands: int, theta_steps: int = 90):
    return tabulate(model, bands, theta_steps)


def phong_lobe_zh(exponent: float, bands: int, nodes: int = 256) -> np.ndarray:
    """ZH coefficients of the kernel (e+2)/(2 pi) max(0, t)^e."""
    x, w = leggauss(nodes)
    t = 0.5 * (x + 1.0)
    wt = 0.5 * w
    k = (exponent + 2.0) / (2.0 * math.pi) * t**exponent
    p = np.empty((bands, t.size))
    for i in range(t.size):
        sh.legendre_all(bands, t[i], p[:, i])
    kl = np.array([math.sqrt((2 * l + 1) / (4 * math.pi)) for l in range(bands)])
    return 2.0 * math.pi * kl * (p @ (wt * k))


@dataclass
class MaterialTables:
    """Per-material SH tables stacked for the compiled kernels."""

    materials: list
    params: np.ndarray
    f: np.ndarray  # (n_mat, steps, 3, bands_gather**2)
    fp: np.ndarray  # (n_mat, steps, 3, bands_emission**2)
    lobe: np.ndarray  # (n_mat, bands_gather)
    bands_gather: int
    bands_emission: int

    @classmethod
    def build(cls, materials, bands_gather: int, bands_emission: int, theta_steps: int = 90):
        materials = list(materials)
        f = np.stack([cached_table(m, bands_gather, theta_steps).entries_f for m in materials])
        fp = np.stack([cached_table(m, bands_emission, theta_steps).entries_fprime for m in materials])
        lobe = np.zeros((len(materials), bands_gather))
        for i, m in enumerate(materials):
            if m.kind == "phong":
                lobe[i] = phong_lobe_zh(m.phong_exponent, bands_gather)
        return cls(materials, pack_materials(materials), np.ascontiguousarray(f),
                   np.ascontiguousarray(fp), lobe, bands_gather, bands_emission)


# ---------------------------------------------------------------------------
# compiled helpers


@njit(cache=True, nogil=True)
def _frame(nx, ny, nz, ox, oy, oz):
    """Tangent t (towards the projection of o) and bitangent b = n x t."""
    c = ox * nx + oy * ny + oz * nz
    tx = ox - c * nx
    ty = oy - c * ny
    tz = oz - c * nz
    tl = math.sqrt(tx * tx + ty * ty + tz * tz)
    if tl < 1e-9:
        if abs(nx) < 0.9:
            tx, ty, tz = 0.0, -nz, ny
        else:
            tx, ty, tz = nz, 0.0, -nx
        tl = math.sqrt(tx * tx + ty * ty + tz * tz)
    tx /= tl
    ty /= tl
    tz /= tl
    bx = ny * tz - nz * ty
    by = nz * tx - nx * tz
    bz = nx * ty - ny * tx
    return tx, ty, tz, bx, by, bz


@njit(cache=True, nogil=True)
def _bin(cos_t, steps):
    c = min(1.0, max(-1.0, cos_t))
    b = int(math.floor(math.acos(c) / (0.5 * math.pi / steps) + 0.5))
    return min(max(b, 0), steps - 1)


@njit(cache=True, nogil=True)
def coverage(cos_t, a):
    """Smoothstep estimate of the cap fraction above the fragment's horizon."""
    theta = math.acos(min(1.0, max(-1.0, cos_t)))
    hi = a + 0.5 * math.pi
    lo = a - 0.5 * math.pi
    th = min(max(theta, lo), hi)
    x = (hi - th) / (2.0 * a)
    x = min(1.0, max(0.0, x))
    return x * x * (3.0 - 2.0 * x)


@njit(cache=True, nogil=True)
def _half_angle(r, d):
    if d <= r:
        return 0.5 * math.pi
    return math.asin(r / d)


@njit(cache=True, nogil=True)
def _zh_scaled_rotation(bands, zh, y):
    """In-place: y[i] <- sqrt(4 pi / (2l+1)) zh[l] y[i]."""
    for l in range(bands):
        s = math.sqrt(4.0 * math.pi / (2 * l + 1)) * zh[l]
        base = l * (l + 1)
        for m in range(-l, l + 1):
            y[base + m] *= s


@njit(cache=True, nogil=True)
def _table_emission(fp_row, ne, lx, ly, lz, ybuf, out):
    """Clamped reconstruction of F' (3, ne^2) at the local direction l."""
    sh.sh_eval_into(ne, lx, ly, lz, ybuf)
    for c in range(3):
        acc = 0.0
        for i in range(ne * ne):
            acc += fp_row[c, i] * ybuf[i]
        out[c] = max(acc, 0.0)


@njit(cache=True, nogil=True)
def hvl_frames(hn, hl, fp_steps):
    """Per-HVL emission frame (z = normal, x towards the light) and F' bin."""
    h = hn.shape[0]
    hu = np.empty((h, 3))
    hv = np.empty((h, 3))
    hb = np.empty(h, dtype=np.int64)
    for j in range(h):
        tx, ty, tz, bx, by, bz = _frame(hn[j, 0], hn[j, 1], hn[j, 2], hl[j, 0], hl[j, 1], hl[j, 2])
        hu[j, 0], hu[j, 1], hu[j, 2] = tx, ty, tz
        hv[j, 0], hv[j, 1], hv[j, 2] = bx, by, bz
        hb[j] = _bin(hn[j, 0] * hl[j, 0] + hn[j, 1] * hl[j, 1] + hn[j, 2] * hl[j, 2], fp_steps)
    return hu, hv, hb


@njit(cache=True, nogil=True)
def hvl_gather(x, n, wo, mat, hp, hn, hu, hv, hb, flux, rad, hmat, f, fp, ng, ne, out):
    """Sum of HVL contributions at one fragment (full SH convolution)."""
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    tx, ty, tz, bx, by, bz = _frame(n[0], n[1], n[2], wo[0], wo[1], wo[2])
    frow = f[mat, _bin(n[0] * wo[0] + n[1] * wo[1] + n[2] * wo[2], f.shape[1])]
    ybuf = np.empty(ng * ng)
    yebuf = np.empty(ne * ne)
    zh = np.empty(ng)
    em = np.empty(3)
    for j in range(hp.shape[0]):
        dx = hp[j, 0] - x[0]
        dy = hp[j, 1] - x[1]
        dz = hp[j, 2] - x[2]
        dist = math.sqrt(dx * dx + dy * dy + dz * dz)
        if dist == 0.0:
            continue
        wx = dx / dist
        wy = dy / dist
        wz = dz / dist
        a = _half_angle(rad[j], dist)
        hcov = coverage(n[0] * wx + n[1] * wy + n[2] * wz, a)
        if hcov <= 0.0:
            continue
        cy = -(hn[j, 0] * wx + hn[j, 1] * wy + hn[j, 2] * wz)
        if cy <= 0.0:
            continue
        # emission towards x, in the HVL frame
        _table_emission(
            fp[hmat[j], hb[j]], ne,
            -(hu[j, 0] * wx + hu[j, 1] * wy + hu[j, 2] * wz),
            -(hv[j, 0] * wx + hv[j, 1] * wy + hv[j, 2] * wz),
            cy, yebuf, em,
        )
        g = cy * hcov / (math.pi * rad[j] * rad[j])
        # cap luminance rotated into the fragment frame
        sh.sh_eval_into(ng, wx * tx + wy * ty + wz * tz, wx * bx + wy * by + wz * bz,
                        wx * n[0] + wy * n[1] + wz * n[2], ybuf)
        sh.zh_cap_into(ng, math.cos(a), zh)
        _zh_scaled_rotation(ng, zh, ybuf)
        for c in range(3):
            acc = 0.0
            for i in range(ng * ng):
                acc += ybuf[i] * frow[c, i]
            if acc > 0.0:
                out[c] += flux[j, c] * em[c] * g * acc


@njit(cache=True, nogil=True)
def _illuminance(z, l0, l1, l2):
    return sh.C3 * l2 * z * z + 2.0 * sh.C2 * l1 * z + sh.C4 * l0 - sh.C5 * l2


@njit(cache=True, nogil=True)
def hvl_gather_zh(x, n, wo, mat, hp, hn, hl, flux, rad, hmat, params, lobe, ng, out):
    """ZH-only gathering: band-2 irradiance for the diffuse part and an
    O(n) ZH convolution for a circularly symmetric specular lobe."""
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    p = params[mat]
    kind = int(p[0])
    f0 = p[6] if kind == 2 else 0.0
    kd = (1.0 - f0) * INV_PI
    co = n[0] * wo[0] + n[1] * wo[1] + n[2] * wo[2]
    rx = 2.0 * co * n[0] - wo[0]
    ry = 2.0 * co * n[1] - wo[1]
    rz = 2.0 * co * n[2] - wo[2]
    nb = max(ng, 3)
    zh = np.empty(nb)
    pl = np.empty(nb)
    fy = np.empty(3)
    for j in range(hp.shape[0]):
        dx = hp[j, 0] - x[0]
        dy = hp[j, 1] - x[1]
        dz = hp[j, 2] - x[2]
        dist = math.sqrt(dx * dx + dy * dy + dz * dz)
        if dist == 0.0:
            continue
        wx = dx / dist
        wy = dy / dist
        wz = dz / dist
        a = _half_angle(rad[j], dist)
        cx = n[0] * wx + n[1] * wy + n[2] * wz
        hcov = coverage(cx, a)
        if hcov <= 0.0:
            continue
        cy = -(hn[j, 0] * wx + hn[j, 1] * wy + hn[j, 2] * wz)
        if cy <= 0.0:
            continue
        brdf_eval(params[hmat[j]], hn[j, 0], hn[j, 1], hn[j, 2], hl[j, 0], hl[j, 1], hl[j, 2],
                  -wx, -wy, -wz, fy)
        g = cy * hcov / (math.pi * rad[j] * rad[j])
        sh.zh_cap_into(nb, math.cos(a), zh)
        diffuse = max(_illuminance(cx, zh[0], zh[1], zh[2]), 0.0) * kd
        spec = 0.0
        if f0 > 0.0:
            sh.legendre_all(ng, rx * wx + ry * wy + rz * wz, pl)
            for l in range(ng):
                k = math.sqrt((2 * l + 1) / (4.0 * math.pi))
                spec += math.sqrt(4.0 * math.pi / (2 * l + 1)) * zh[l] * lobe[mat, l] * k * pl[l]
            spec = max(spec, 0.0) * f0 * max(cx, 0.0)
        for c in range(3):
            out[c] += flux[j, c] * fy[c] * g * (p[1 + c] * diffuse + spec)


@njit(cache=True, nogil=True)
def vpl_gather(x, n, wo, mat, hp, hn, hl, flux, hmat, params, clamp, out):
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    fy = np.empty(3)
    fx = np.empty(3)
    for j in range(hp.shape[0]):
        dx = hp[j, 0] - x[0]
        dy = hp[j, 1] - x[1]
        dz = hp[j, 2] - x[2]
        d2 = dx * dx + dy * dy + dz * dz
        if d2 == 0.0:
            continue
        dist = math.sqrt(d2)
        wx = dx / dist
        wy = dy / dist
        wz = dz / dist
        cx = n[0] * wx + n[1] * wy + n[2] * wz
        cy = -(hn[j, 0] * wx + hn[j, 1] * wy + hn[j, 2] * wz)
        if cx <= 0.0 or cy <= 0.0:
            continue
        brdf_eval(params[hmat[j]], hn[j, 0], hn[j, 1], hn[j, 2], hl[j, 0], hl[j, 1], hl[j, 2],
                  -wx, -wy, -wz, fy)
        brdf_eval(params[mat], n[0], n[1], n[2], wx, wy, wz, wo[0], wo[1], wo[2], fx)
        for c in range(3):
            v = flux[j, c] * fy[c] * cy * fx[c] * cx / d2
            if clamp > 0.0 and v > clamp:
                v = clamp
            out[c] += v


@njit(cache=True, nogil=True)
def _cone_dir(wx, wy, wz, tx, ty, tz, bx, by, bz, ca, u, c, s):
    """Map one canonical sample into the cone of cos half-angle ca about w."""
    ct = 1.0 - u * (1.0 - ca)
    st = math.sqrt(max(0.0, 1.0 - ct * ct))
    return (ct * wx + st * (c * tx + s * bx), ct * wy + st * (c * ty + s * by),
            ct * wz + st * (c * tz + s * bz))


@njit(cache=True, nogil=True)
def cone_directions(w, ref, a, su, scos, ssin):
    """Uniform cone samples about w; the tangent lies in the plane of (w, ref)."""
    tx, ty, tz, bx, by, bz = _frame(w[0], w[1], w[2], ref[0], ref[1], ref[2])
    ca = math.cos(a)
    out = np.empty((su.shape[0], 3))
    for k in range(su.shape[0]):
        out[k, 0], out[k, 1], out[k, 2] = _cone_dir(w[0], w[1], w[2], tx, ty, tz, bx, by, bz, ca,
                                                    su[k], scos[k], ssin[k])
    return out


@njit(cache=True, nogil=True)
def vsl_gather(x, n, wo, mat, hp, hn, hl, flux, rad, hmat, params, su, scos, ssin, out):
    """Monte-Carlo cone integral of the fragment BRDF per virtual light.

    The canonical samples (u for cos(theta), phi as cos/sin) are shared by
    all virtual lights; each light maps them into its own cone.
    """
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    ns = su.shape[0]
    lam = int(params[mat, 0]) == 0
    fy = np.empty(3)
    fx = np.empty(3)
    acc = np.empty(3)
    for j in range(hp.shape[0]):
        dx = hp[j, 0] - x[0]
        dy = hp[j, 1] - x[1]
        dz = hp[j, 2] - x[2]
        dist = math.sqrt(dx * dx + dy * dy + dz * dz)
        if dist == 0.0:
            continue
        wx = dx / dist
        wy = dy / dist
        wz = dz / dist
        a = _half_angle(rad[j], dist)
        nw = n[0] * wx + n[1] * wy + n[2] * wz
        hcov = coverage(nw, a)
        if hcov <= 0.0:
            continue
        cy = -(hn[j, 0] * wx + hn[j, 1] * wy + hn[j, 2] * wz)
        if cy <= 0.0:
            continue
        brdf_eval(params[hmat[j]], hn[j, 0], hn[j, 1], hn[j, 2], hl[j, 0], hl[j, 1], hl[j, 2],
                  -wx, -wy, -wz, fy)
        g = cy * hcov / (math.pi * rad[j] * rad[j])
        ca = math.cos(a)
        solid = 2.0 * math.pi * (1.0 - ca)
        # cone frame: t in the plane of (w, n) so that n . b = 0
        tx, ty, tz, bx, by, bz = _frame(wx, wy, wz, n[0], n[1], n[2])
        nt = n[0] * tx + n[1] * ty + n[2] * tz
        acc[0] = 0.0
        acc[1] = 0.0
        acc[2] = 0.0
        if lam:
            s = 0.0
            for k in range(ns):
                ct = 1.0 - su[k] * (1.0 - ca)
                st = math.sqrt(max(0.0, 1.0 - ct * ct))
                v = ct * nw + st * scos[k] * nt
                if v > 0.0:
                    s += v
            for c in range(3):
                acc[c] = s * params[mat, 1 + c] * INV_PI
        else:
            for k in range(ns):
                sx, sy, sz = _cone_dir(wx, wy, wz, tx, ty, tz, bx, by, bz, ca, su[k], scos[k], ssin[k])
                ci = n[0] * sx + n[1] * sy + n[2] * sz
                if ci <= 0.0:
                    continue
                brdf_eval(params[mat], n[0], n[1], n[2], sx, sy, sz, wo[0], wo[1], wo[2], fx)
                for c in range(3):
                    acc[c] += fx[c] * ci
        for c in range(3):
            out[c] += flux[j, c] * fy[c] * g * acc[c] * solid / ns


@njit(cache=True, nogil=True)
def spot_intensity(lp, lframe, tan_l, power, px, py, pz, out):
    """Radiant intensity of a square-frustum spot towards point p.

    The profile Phi / (4 tan^2(lambda) cos^3) puts equal flux through every
    pixel of a square RSM. Returns the distance to the light, 0 outside.
    """
    qx = px - lp[0]
    qy = py - lp[1]
    qz = pz - lp[2]
    d = math.sqrt(qx * qx + qy * qy + qz * qz)
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    if d == 0.0:
        return 0.0
    qx /= d
    qy /= d
    qz /= d
    cw = qx * lframe[2, 0] + qy * lframe[2, 1] + qz * lframe[2, 2]
    if cw <= 0.0:
        return 0.0
    cu = qx * lframe[0, 0] + qy * lframe[0, 1] + qz * lframe[0, 2]
    cv = qx * lframe[1, 0] + qy * lframe[1, 1] + qz * lframe[1, 2]
    lim = tan_l * cw
    if abs(cu) > lim or abs(cv) > lim:
        return 0.0
    s = 1.0 / (4.0 * tan_l * tan_l * cw * cw * cw)
    for c in range(3):
        out[c] = power[c] * s
    return d


@njit(cache=True, nogil=True)
def direct_shade(g, eps, x, n, wo, mat, lpos, lframe, ltan, lpow, f, ng, shadows, out):
    """Dirac primaries projected on SH and dotted with the F table."""
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    tx, ty, tz, bx, by, bz = _frame(n[0], n[1], n[2], wo[0], wo[1], wo[2])
    frow = f[mat, _bin(n[0] * wo[0] + n[1] * wo[1] + n[2] * wo[2], f.shape[1])]
    ybuf = np.empty(ng * ng)
    inten = np.empty(3)
    for li in range(lpos.shape[0]):
        d = spot_intensity(lpos[li], lframe[li], ltan[li], lpow[li], x[0], x[1], x[2], inten)
        if d == 0.0:
            continue
        lx = (lpos[li, 0] - x[0]) / d
        ly = (lpos[li, 1] - x[1]) / d
        lz = (lpos[li, 2] - x[2]) / d
        cn = lx * n[0] + ly * n[1] + lz * n[2]
        # light behind the fragment: only band-limited ringing would remain
        if cn <= 0.0:
            continue
        if shadows and d > 2.0 * eps and bvh_any(g, x[0], x[1], x[2], lx, ly, lz, eps, d - eps):
            continue
        sh.sh_eval_into(ng, lx * tx + ly * ty + lz * tz, lx * bx + ly * by + lz * bz, cn, ybuf)
        for c in range(3):
            acc = 0.0
            for i in range(ng * ng):
                acc += ybuf[i] * frow[c, i]
            if acc > 0.0:
                out[c] += inten[c] * acc / (d * d)


@njit(cache=True, nogil=True)
def path_shade(g, eps, x, n, wo, mat, params, lpos, lframe, ltan, lpow, rnd, visibility, out):
    """One-bounce indirect by cosine-weighted sampling at x.

    Without visibility every surface crossed by the sample ray contributes
    (x-to-y occlusion ignored, like the virtual-light estimators); with it
    only the nearest hit does. Light-to-y visibility is always traced.
    """
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    tx, ty, tz, bx, by, bz = _frame(n[0], n[1], n[2], wo[0], wo[1], wo[2])
    hit_t = np.empty(MAX_HITS)
    hit_k = np.empty(MAX_HITS, dtype=np.int64)
    hit_u = np.empty(MAX_HITS)
    hit_v = np.empty(MAX_HITS)
    fx = np.empty(3)
    fy = np.empty(3)
    inten = np.empty(3)
    acc = np.zeros(3)
    ns = rnd.shape[0]
    for s in range(ns):
        r = math.sqrt(rnd[s, 0])
        phi = 2.0 * math.pi * rnd[s, 1]
        lx = r * math.cos(phi)
        ly = r * math.sin(phi)
        lz = math.sqrt(max(0.0, 1.0 - rnd[s, 0]))
        dx = lx * tx + ly * bx + lz * n[0]
        dy = lx * ty + ly * by + lz * n[1]
        dz = lx * tz + ly * bz + lz * n[2]
        brdf_eval(params[mat], n[0], n[1], n[2], dx, dy, dz, wo[0], wo[1], wo[2], fx)
        if fx[0] == 0.0 and fx[1] == 0.0 and fx[2] == 0.0:
            continue
        if visibility:
            t0, k0, u0, v0 = bvh_nearest(g, x[0], x[1], x[2], dx, dy, dz, eps, np.inf)
            nh = 0
            if k0 >= 0:
                hit_t[0] = t0
                hit_k[0] = k0
                hit_u[0] = u0
                hit_v[0] = v0
                nh = 1
        else:
            nh = bvh_all(g, x[0], x[1], x[2], dx, dy, dz, eps, np.inf, hit_t, hit_k, hit_u, hit_v)
        for h in range(nh):
            k = hit_k[h]
            yx = x[0] + hit_t[h] * dx
            yy = x[1] + hit_t[h] * dy
            yz = x[2] + hit_t[h] * dz
            nx, ny, nz = shading_normal(g, k, hit_u[h], hit_v[h])
            for li in range(lpos.shape[0]):
                d = spot_intensity(lpos[li], lframe[li], ltan[li], lpow[li], yx, yy, yz, inten)
                if d == 0.0:
                    continue
                qx = (lpos[li, 0] - yx) / d
                qy = (lpos[li, 1] - yy) / d
                qz = (lpos[li, 2] - yz) / d
                cl = nx * qx + ny * qy + nz * qz
                sgn = 1.0 if cl >= 0.0 else -1.0
                # lit side must face x
                if sgn * (nx * dx + ny * dy + nz * dz) >= 0.0:
                    continue
                if d > 2.0 * eps and bvh_any(g, yx, yy, yz, qx, qy, qz, eps, d - eps):
                    continue
                brdf_eval(params[g.mat[k]], sgn * nx, sgn * ny, sgn * nz, qx, qy, qz,
                          -dx, -dy, -dz, fy)
                e = abs(cl) / (d * d)
                for c in range(3):
                    acc[c] += math.pi * fx[c] * fy[c] * inten[c] * e
    for c in range(3):
        out[c] = acc[c] / ns


# ---------------------------------------------------------------------------
# light packing


@dataclass
class LightArrays:
    pos: np.ndarray
    frame: np.ndarray
    tan: np.ndarray
    power: np.ndarray


def pack_lights(scene: Scene, lights=None, scale: float = 1.0) -> LightArrays:
    lights = scene.lights if lights is None else lights
    return LightArrays(
        pos=np.ascontiguousarray([l.position for l in lights], dtype=np.float64).reshape(-1, 3),
        frame=np.ascontiguousarray([scene.light_frame(l) for l in lights], dtype=np.float64).reshape(-1, 3, 3),
        tan=np.ascontiguousarray([math.tan(l.frustum_half_angle) for l in lights], dtype=np.float64),
        power=np.ascontiguousarray([l.power for l in lights], dtype=np.float64).reshape(-1, 3) * scale,
    )


def cone_samples(count: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, 0x5653])
    u = rng.random((count, 2))
    phi = 2.0 * math.pi * u[:, 1]
    return np.ascontiguousarray(u[:, 0]), np.cos(phi), np.sin(phi)


def path_randoms(seed: int, row: int, count: int, samples: int) -> np.ndarray:
    """Uniforms for one image row; depends only on (seed, row)."""
    return np.random.default_rng([seed, 0x5054, row]).random((count, samples, 2))


# ---------------------------------------------------------------------------
# single-point API


def cap_half_angle(r: float, d: float) -> float:
    if r <= 0.0 or d <= 0.0:
        raise ValueError("radius and distance must be positive")
    return float(_half_angle(r, d))


def hemisphere_coverage(n_x, w_j, a: float) -> float:
    return float(coverage(float(np.dot(sh.normalize(n_x), sh.normalize(w_j))), a))


def _one(hvls) -> HvlArrays:
    if isinstance(hvls, Hvl):
        hvls = [hvls]
    return hvls if isinstance(hvls, HvlArrays) else pack_hvls(list(hvls))


def cone_integral(fn, w, a: float, samples: int, seed: int = 0, ref=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Uniform-cone Monte-Carlo estimate (|Q| / N) sum fn(w_s) of the integral
    of ``fn`` over the cone of half-angle a about w.

    Uses the same canonical pattern as the VSL estimator for this seed.
    ``fn`` maps an (N, 3) array of directions to N values (or (N, C) rows).
    """
    su, sc, ss = cone_samples(samples, seed)
    dirs = cone_directions(sh.normalize(w), np.asarray(ref, dtype=np.float64), a, su, sc, ss)
    values = np.asarray(fn(dirs), dtype=np.float64)
    return 2.0 * math.pi * (1.0 - math.cos(a)) * values.sum(axis=0) / samples


def hvl_emission(hvl: Hvl, x, n_x, tables: MaterialTables) -> np.ndarray:
    """Radiance leaving the HVL towards x, including the geometric factor."""
    x = np.asarray(x, dtype=np.float64)
    d = hvl.position - x
    dist = float(np.linalg.norm(d))
    w = d / dist
    a = _half_angle(hvl.radius, dist)
    hcov = coverage(float(np.dot(sh.normalize(n_x), w)), a)
    cy = -float(np.dot(hvl.normal, w))
    if cy <= 0.0 or hcov <= 0.0:
        return np.zeros(3)
    hu, hv, hb = hvl_frames(hvl.normal[None, :].copy(), hvl.to_light[None, :].copy(), tables.fp.shape[1])
    ne = tables.bands_emission
    em = np.empty(3)
    _table_emission(tables.fp[hvl.material, hb[0]], ne, -float(hu[0] @ w), -float(hv[0] @ w), cy,
                    np.empty(ne * ne), em)
    return hvl.flux * em * cy * hcov / (math.pi * hvl.radius**2)


def gather_indirect(sp: ShadePoint, hvls, tables: MaterialTables) -> np.ndarray:
    h = _one(hvls)
    out = np.zeros(3)
    if h.pos.shape[0] == 0:
        return out
    hu, hv, hb = hvl_frames(h.normal, h.to_light, tables.fp.shape[1])
    hvl_gather(sp.x, sp.n, sp.wo, sp.material, h.pos, h.normal, hu, hv, hb, h.flux, h.radius,
               h.mat, tables.f, tables.fp, tables.bands_gather, tables.bands_emission, out)
    return out


def hvl_contribution(sp: ShadePoint, hvl: Hvl, tables: MaterialTables) -> np.ndarray:
    return gather_indirect(sp, [hvl], tables)


def gather_indirect_zh_fast(sp: ShadePoint, hvls, tables: MaterialTables) -> np.ndarray:
    if not tables.materials[sp.material].zh_compatible:
        raise ValueError(
            f"material {sp.material} ({tables.materials[sp.material].kind}) has no "
            "circularly symmetric lobe; the ZH path needs lambertian or phong"
        )
    h = _one(hvls)
    out = np.zeros(3)
    hvl_gather_zh(sp.x, sp.n, sp.wo, sp.material, h.pos, h.normal, h.to_light, h.flux, h.radius,
                  h.mat, tables.params, tables.lobe, tables.bands_gather, out)
    return out


def vpl_contribution(sp: ShadePoint, hvls, materials, clamp: float | None = None) -> np.ndarray:
    h = _one(hvls)
    out = np.zeros(3)
    vpl_gather(sp.x, sp.n, sp.wo, sp.material, h.pos, h.normal, h.to_light, h.flux, h.mat,
               pack_materials(list(materials)), clamp or 0.0, out)
    return out


def vsl_contribution(sp: ShadePoint, hvls, materials, samples: int = 25, seed: int = 0) -> np.ndarray:
    h = _one(hvls)
    su, sc, ss = cone_samples(samples, seed)
    out = np.zeros(3)
    vsl_gather(sp.x, sp.n, sp.wo, sp.material, h.pos, h.normal, h.to_light, h.flux, h.radius,
               h.mat, pack_materials(list(materials)), su, sc, ss, out)
    return out


def direct_lighting(sp: ShadePoint, scene: Scene, light: SpotLight, tables: MaterialTables,
                    shadows: bool = False) -> np.ndarray:
    la = pack_lights(scene, [light])
    out = np.zeros(3)
    direct_shade(scene.geometry, scene.epsilon, sp.x, sp.n, sp.wo, sp.material, la.pos, la.frame,
                 la.tan, la.power, tables.f, tables.bands_gather, shadows, out)
    return out


def path_trace_indirect(sp: ShadePoint, scene: Scene, samples: int = 256, seed: int = 0,
                        visibility: bool = False) -> np.ndarray:
    la = pack_lights(scene)
    rnd = np.random.default_rng([seed, 0x5054]).random((samples, 2))
    out = np.zeros(3)
    path_shade(scene.geometry, scene.epsilon, sp.x, sp.n, sp.wo, sp.material, scene.packed_materials,
               la.pos, la.frame, la.tan, la.power, rnd, visibility, out)
    return out
