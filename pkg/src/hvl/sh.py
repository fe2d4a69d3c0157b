"""Real spherical and zonal harmonics.

Coefficient vectors are plain float arrays. An SH vector with ``N`` bands has
``N*N`` entries stored at flat index ``l*(l+1) + m``; a ZH vector with ``N``
bands has ``N`` entries, one per band.

Sign convention: the associated Legendre functions carry no Condon-Shortley
phase, so ``Y_1^1`` is proportional to ``+x`` and ``Y_1^-1`` to ``+y``.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from numba import njit
from numpy.polynomial.legendre import leggauss

MAX_BANDS = 48

SQRT_PI = math.sqrt(math.pi)
SQRT2 = math.sqrt(2.0)

# Ramamoorthi-Hanrahan irradiance constants.
C2 = 0.511664
C3 = 0.743125
C4 = 0.886227
C5 = 0.247708


def _norm_table(n: int) -> np.ndarray:
    k = np.zeros((n, n))
    for l in range(n):
        for m in range(l + 1):
            # (l-m)!/(l+m)! via lgamma to stay finite at high bands
            ratio = math.exp(math.lgamma(l - m + 1) - math.lgamma(l + m + 1))
            k[l, m] = math.sqrt((2 * l + 1) / (4.0 * math.pi) * ratio)
    return k


_K = _norm_table(MAX_BANDS)
_ZH_SCALE = np.array([math.sqrt(4.0 * math.pi / (2 * l + 1)) for l in range(MAX_BANDS)])


def sh_index(l: int, m: int) -> int:
    return l * (l + 1) + m


def n_coeffs(bands: int) -> int:
    return bands * bands


def bands_of(v: np.ndarray) -> int:
    n = int(round(math.sqrt(v.shape[-1])))
    if n * n != v.shape[-1]:
        raise ValueError(f"length {v.shape[-1]} is not a square band count")
    return n


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise ValueError("cannot normalize a zero vector")
    return v / n


# ---------------------------------------------------------------------------
# compiled scalar kernels, shared by the image estimators


@njit(cache=True, nogil=True)
def legendre_all(n, x, out):
    """P_0..P_{n-1}(x) by Bonnet's recurrence."""
    if n > 0:
        out[0] = 1.0
    if n > 1:
        out[1] = x
    for l in range(2, n):
        out[l] = ((2 * l - 1) * x * out[l - 1] - (l - 1) * out[l - 2]) / l


@njit(cache=True, nogil=True)
def zh_cap_into(bands, alpha, out):
    """ZH coefficients of the unit cap with cos(half-angle) = alpha."""
    p = np.empty(bands + 1)
    legendre_all(bands + 1, alpha, p)
    out[0] = SQRT_PI * (1.0 - alpha)
    for l in range(1, bands):
        out[l] = math.sqrt(math.pi / (2 * l + 1)) * (p[l - 1] - p[l + 1])


@njit(cache=True, nogil=True)
def sh_eval_into(bands, x, y, z, out):
    """All real SH basis values up to ``bands`` at the unit vector (x, y, z).

    Uses P_l^m / sin^m(theta) together with Re/Im((x + iy)^m), which keeps
    the evaluation polynomial and free of atan2 at the poles.
    """
    # m = 0 column
    p_prev2 = 0.0
    p_prev = 1.0
    for l in range(bands):
        if l == 0:
            p = 1.0
        elif l == 1:
            p = z
        else:
            p = ((2 * l - 1) * z * p_prev - (l - 1) * p_prev2) / l
        out[l * (l + 1)] = _K[l, 0] * p
        p_prev2 = p_prev
        p_prev = p
    c_m = 1.0
    s_m = 0.0
    pmm = 1.0
    for m in range(1, bands):
        # (x + iy)^m
        c_new = c_m * x - s_m * y
        s_m = c_m * y + s_m * x
        c_m = c_new
        pmm *= 2 * m - 1
        q_prev2 = 0.0
        q_prev = pmm
        for l in range(m, bands):
            if l == m:
                q = pmm
            elif l == m + 1:
                q = z * (2 * m + 1) * pmm
            else:
                q = ((2 * l - 1) * z * q_prev - (l + m - 1) * q_prev2) / (l - m)
            k = SQRT2 * _K[l, m] * q
            base = l * (l + 1)
            out[base + m] = k * c_m
            out[base - m] = k * s_m
            q_prev2 = q_prev
            q_prev = q


@njit(cache=True, nogil=True)
def sh_eval_many(bands, dirs, out):
    for i in range(dirs.shape[0]):
        sh_eval_into(bands, dirs[i, 0], dirs[i, 1], dirs[i, 2], out[i])


# ---------------------------------------------------------------------------
# public API


def legendre(l: int, x: float) -> float:
    if l < 0:
        raise ValueError("band must be non-negative")
    if abs(x) > 1.0 + 1e-12:
        raise ValueError(f"legendre argument {x} outside [-1, 1]")
    p = np.empty(l + 1)
    legendre_all(l + 1, float(x), p)
    return float(p[l])


def assoc_legendre(l: int, m: int, x: float) -> float:
    """P_l^m(x) without the Condon-Shortley phase."""
    if not 0 <= m <= l:
        raise ValueError(f"need 0 <= m <= l, got l={l} m={m}")
    if abs(x) > 1.0 + 1e-12:
        raise ValueError(f"assoc_legendre argument {x} outside [-1, 1]")
    x = min(1.0, max(-1.0, x))
    pmm = 1.0
    s = math.sqrt(max(0.0, 1.0 - x * x))
    for i in range(1, m + 1):
        pmm *= (2 * i - 1) * s
    if l == m:
        return pmm
    pm1 = x * (2 * m + 1) * pmm
    if l == m + 1:
        return pm1
    for ll in range(m + 2, l + 1):
        pmm, pm1 = pm1, ((2 * ll - 1) * x * pm1 - (ll + m - 1) * pmm) / (ll - m)
    return pm1


def sh_eval(bands: int, dirs) -> np.ndarray:
    """Basis matrix of shape ``dirs.shape[:-1] + (bands**2,)``."""
    if not 1 <= bands <= MAX_BANDS:
        raise ValueError(f"bands must be in [1, {MAX_BANDS}]")
    d = np.asarray(dirs, dtype=np.float64)
    flat = np.ascontiguousarray(d.reshape(-1, 3))
    out = np.empty((flat.shape[0], bands * bands))
    sh_eval_many(bands, flat, out)
    return out.reshape(d.shape[:-1] + (bands * bands,))


def sh_basis(l: int, m: int, direction) -> float:
    if not -l <= m <= l:
        raise ValueError(f"need |m| <= l, got l={l} m={m}")
    return float(sh_eval(l + 1, direction)[..., sh_index(l, m)])


def reconstruct(v, direction):
    """Evaluate the band-limited function ``v`` at one or many directions."""
    v = np.asarray(v, dtype=np.float64)
    basis = sh_eval(bands_of(v), direction)
    res = basis @ v
    return float(res) if np.ndim(res) == 0 else res


def _frame(pole) -> np.ndarray:
    w = normalize(pole)
    helper = np.array([1.0, 0.0, 0.0]) if abs(w[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = normalize(np.cross(helper, w))
    v = np.cross(w, u)
    return np.stack([u, v, w])


def sphere_quadrature(
    bands: int,
    pole=(0.0, 0.0, 1.0),
    breaks: Sequence[float] = (),
    n_theta: int | None = None,
    n_phi: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Product rule on the sphere: Gauss-Legendre in cos(theta) x uniform phi.

    ``breaks`` are polar angles (about ``pole``) where the integrand may be
    discontinuous; each segment gets its own Gauss rule.
    """
    n_theta = n_theta or 2 * bands + 2
    n_phi = n_phi or 4 * bands + 4
    edges = sorted({0.0, math.pi, *[float(b) for b in breaks if 0.0 < b < math.pi]})
    xg, wg = leggauss(n_theta)
    zs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        # integrate over u = cos(theta) from cos(hi) to cos(lo)
        a, b = math.cos(hi), math.cos(lo)
        zs.append(0.5 * (b - a) * xg + 0.5 * (b + a))
        ws.append(0.5 * (b - a) * wg)
    z = np.concatenate(zs)
    wz = np.concatenate(ws)
    phi = (np.arange(n_phi) + 0.5) * (2.0 * math.pi / n_phi)
    s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    local = np.stack(
        [
            s[:, None] * np.cos(phi)[None, :],
            s[:, None] * np.sin(phi)[None, :],
            np.broadcast_to(z[:, None], (z.size, n_phi)),
        ],
        axis=-1,
    ).reshape(-1, 3)
    weights = np.repeat(wz * (2.0 * math.pi / n_phi), n_phi)
    dirs = local @ _frame(pole)
    return dirs, weights


def project_quadrature(
    f: Callable[[np.ndarray], np.ndarray],
    bands: int,
    pole=(0.0, 0.0, 1.0),
    breaks: Sequence[float] = (),
    n_theta: int | None = None,
    n_phi: int | None = None,
) -> np.ndarray:
    """Numerically project ``f`` (vectorized over an (n, 3) array) onto SH."""
    dirs, w = sphere_quadrature(bands, pole, breaks, n_theta, n_phi)
    vals = np.asarray(f(dirs), dtype=np.float64)
    return (vals * w) @ sh_eval(bands, dirs)


def cap_integral(l: int, alpha: float) -> float:
    """Closed form of the integral of P_l(cos t) sin t for t in [0, acos(alpha)]."""
    if abs(alpha) > 1.0 + 1e-12:
        raise ValueError("alpha outside [-1, 1]")
    p = np.empty(l + 2)
    legendre_all(l + 2, float(alpha), p)
    p_lm1 = 1.0 if l == 0 else p[l - 1]
    return float((p_lm1 - p[l + 1]) / (2 * l + 1))


def zh_cap(half_angle: float, bands: int) -> np.ndarray:
    if not 0.0 <= half_angle <= math.pi:
        raise ValueError("cap half-angle must lie in [0, pi]")
    out = np.empty(bands)
    zh_cap_into(bands, math.cos(half_angle), out)
    return out


def zh_rotate_to_sh(zh, axis) -> np.ndarray:
    zh = np.asarray(zh, dtype=np.float64)
    n = zh.shape[0]
    basis = sh_eval(n, normalize(axis))
    ls = np.repeat(np.arange(n), 2 * np.arange(n) + 1)
    return _ZH_SCALE[ls] * zh[ls] * basis


def sh_dot(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    k = min(a.shape[-1], b.shape[-1])
    return float(a[..., :k] @ b[..., :k]) if a.ndim == 1 else a[..., :k] @ b[..., :k]


def zh_convolve(f, g) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != g.shape:
        raise ValueError("zh_convolve needs equal band counts")
    return _ZH_SCALE[: f.shape[0]] * f * g


def hann_weights(bands: int) -> np.ndarray:
    l = np.arange(bands)
    return 0.5 * (1.0 + np.cos(np.pi * l / bands))


def window_coeffs(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = bands_of(v)
    w = hann_weights(n)
    return v * w[np.repeat(np.arange(n), 2 * np.arange(n) + 1)]


def illuminance(z: float, zh3) -> float:
    """Clamped-cosine irradiance from a ZH radiance oriented at angle acos(z)."""
    zh3 = np.asarray(zh3, dtype=np.float64)
    if zh3.shape[0] < 3:
        raise ValueError("illuminance needs at least 3 bands")
    l0, l1, l2 = zh3[0], zh3[1], zh3[2]
    return float(C3 * l2 * z * z + 2.0 * C2 * l1 * z + C4 * l0 - C5 * l2)
