"""Scene builders and numerical oracles shared by the tests."""
import math
from dataclasses import replace

import numpy as np
from scipy.special import eval_legendre

from hvl import sh
from hvl.brdf import BrdfModel
from hvl.scene import Camera, Mesh, Scene, SpotLight


def quad(name, center, u, v, material=0):
    """Rectangle center +- u +- v, normal along u x v."""
    c, u, v = (np.asarray(x, dtype=float) for x in (center, u, v))
    verts = [c - u - v, c + u - v, c + u + v, c - u + v]
    return Mesh.from_triangles(name, verts, [[0, 1, 2], [0, 2, 3]], material)


def plane_scene(size=50.0, light_height=1.0, half_angle=math.pi / 4, power=(1.0, 1.0, 1.0),
                albedo=(0.5, 0.5, 0.5), rsm_resolution=64, camera=None):
    """A large floor (z = 0, normal +z) lit by a spot pointing straight down."""
    floor = quad("floor", (0, 0, 0), (size, 0, 0), (0, size, 0))
    light = SpotLight((0.0, 0.0, light_height), (0, 0, -1), half_angle, power, rsm_resolution)
    cam = camera or Camera((0.0, -1.0, 2.0), (0.0, 0.0, 0.0), (0, 0, 1), 40.0, 16, 16)
    return Scene([floor], [BrdfModel("lambertian", albedo)], [light], cam)


def two_planes(gap=1.0, size=0.5, albedo=0.5, half_angle=math.pi / 4, power=(1.0, 1.0, 1.0)):
    """Floor and ceiling facing each other; the light shines up at the ceiling."""
    floor = quad("floor", (0, 0, 0), (size, 0, 0), (0, size, 0))
    ceiling = quad("ceiling", (0, 0, gap), (0, size, 0), (size, 0, 0))  # faces -z
    light = SpotLight((0.0, 0.0, 0.05), (0, 0, 1), half_angle, power, 32)
    cam = Camera((0.0, -3.0, 0.5), (0.0, 0.0, 0.5), (0, 0, 1), 40.0, 8, 8)
    mats = [BrdfModel("lambertian", (albedo,) * 3)]
    return Scene([floor, ceiling], mats, [light], cam)


def random_rotation(seed):
    q = np.random.default_rng(seed).normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def resized(scene, width, height, rsm_resolution=None, power_scale=1.0):
    """Copy of ``scene`` with another image size, RSM size or light power."""
    lights = [
        replace(l, rsm_resolution=rsm_resolution or l.rsm_resolution,
                power=tuple(power_scale * p for p in l.power))
        for l in scene.lights
    ]
    cam = replace(scene.camera, width=width, height=height)
    return Scene(scene.meshes, scene.materials, lights, cam)


def point_to_rectangle(a, b, c):
    """Form factor from a point to a parallel a x b rectangle at distance c,
    the point lying on the normal through one of its corners."""
    A, B = a / c, b / c
    sa, sb = math.sqrt(1 + A * A), math.sqrt(1 + B * B)
    return (A / sa * math.atan(B / sa) + B / sb * math.atan(A / sb)) / (2 * math.pi)


def zonal_value(zh, t):
    """Evaluate a ZH vector at cos(angle to its axis)."""
    return sum(math.sqrt((2 * l + 1) / (4 * math.pi)) * c * eval_legendre(l, t) for l, c in enumerate(zh))


def convolution_oracle(f, g, bands):
    """ZH coefficients of h(w) = integral of f(w') g(w . w') dw', by double quadrature."""
    inner_dirs, inner_w = sh.sphere_quadrature(bands)
    fv = zonal_value(f, inner_dirs[:, 2])

    def h(dirs):
        return np.array([np.sum(inner_w * fv * zonal_value(g, inner_dirs @ d)) for d in dirs])

    full = sh.project_quadrature(h, bands)
    return full, full[[sh.sh_index(l, 0) for l in range(bands)]]
