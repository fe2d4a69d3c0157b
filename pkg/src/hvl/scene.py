"""Scene description, OBJ-subset meshes and BVH ray queries."""
from __future__ import annotations

import math
import sys
from collections import namedtuple
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numba import njit

from .brdf import BrdfModel, pack_materials

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DATA_DIR = Path(__file__).parent / "data"
BUILTIN_SCENES = {"cornell": DATA_DIR / "cornell" / "cornell.toml"}

# Frustum half-angle cap: a square frustum degenerates at 90 degrees.
MAX_FRUSTUM_HALF_ANGLE = math.radians(85.0)
LEAF_SIZE = 4
STACK_DEPTH = 64


class SceneError(ValueError):
    pass


# ---------------------------------------------------------------------------
# data types


@dataclass
class Mesh:
    name: str
    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3) vertex indices, 0-based
    normals: np.ndarray  # (F, 3, 3) per-corner unit normals
    material: int

    @classmethod
    def from_triangles(cls, name: str, vertices, faces, material: int = 0) -> "Mesh":
        """Mesh with flat (geometric) normals."""
        V = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        F = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        g = np.cross(V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]])
        gl = np.linalg.norm(g, axis=1, keepdims=True)
        if np.any(gl == 0.0):
            raise SceneError(f"mesh {name!r} has a degenerate face")
        normals = np.repeat((g / gl)[:, None, :], 3, axis=1)
        return cls(name, V, F, normals, material)


@dataclass(frozen=True)
class SpotLight:
    position: tuple
    direction: tuple
    half_angle: float
    power: tuple
    rsm_resolution: int = 256

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        n = float(np.linalg.norm(d))
        if n == 0.0:
            raise SceneError("light direction must be non-zero")
        object.__setattr__(self, "direction", tuple(d / n))
        object.__setattr__(self, "position", tuple(float(x) for x in self.position))
        object.__setattr__(self, "power", tuple(float(x) for x in self.power))
        if not 0.0 < self.half_angle <= math.pi / 2 + 1e-12:
            raise SceneError(f"light half-angle {self.half_angle} outside (0, pi/2]")
        if any(p < 0.0 for p in self.power) or len(self.power) != 3:
            raise SceneError("light power must be 3 non-negative values")
        if self.rsm_resolution < 1:
            raise SceneError("rsm_resolution must be positive")

    @property
    def frustum_half_angle(self) -> float:
        return min(self.half_angle, MAX_FRUSTUM_HALF_ANGLE)


@dataclass(frozen=True)
class Camera:
    position: tuple
    look_at: tuple
    up: tuple = (0.0, 1.0, 0.0)
    vfov_deg: float = 40.0
    width: int = 64
    height: int = 64

    @property
    def forward(self) -> np.ndarray:
        f = np.subtract(self.look_at, self.position)
        return f / np.linalg.norm(f)

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        f = self.forward
        r = np.cross(f, self.up)
        if np.linalg.norm(r) < 1e-12:
            raise SceneError("camera up is parallel to the view direction")
        r /= np.linalg.norm(r)
        return r, np.cross(r, f), f

    def ray_directions(self) -> np.ndarray:
        r, u, f = self.basis()
        th = math.tan(math.radians(self.vfov_deg) / 2)
        aspect = self.width / self.height
        px = (2.0 * (np.arange(self.width) + 0.5) / self.width - 1.0) * th * aspect
        py = (1.0 - 2.0 * (np.arange(self.height) + 0.5) / self.height) * th
        d = f + px[None, :, None] * r + py[:, None, None] * u
        return d / np.linalg.norm(d, axis=-1, keepdims=True)


Geometry = namedtuple(
    "Geometry",
    "v0 e1 e2 n0 n1 n2 ng mat node_min node_max node_left node_right node_start node_count order",
)


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_min: float = 0.0
    t_max: float = math.inf

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        d = np.asarray(self.direction, dtype=np.float64)
        self.direction = d / np.linalg.norm(d)
        if not self.t_min < self.t_max:
            raise ValueError("ray needs t_min < t_max")


@dataclass
class Hit:
    t: float
    point: np.ndarray
    normal: np.ndarray
    material: int
    triangle: int


@dataclass
class Scene:
    meshes: list[Mesh]
    materials: list[BrdfModel]
    lights: list[SpotLight]
    camera: Camera
    _geometry: Geometry | None = field(default=None, repr=False)

    def __post_init__(self):
        validate(self)

    @property
    def geometry(self) -> Geometry:
        if self._geometry is None:
            self._geometry = build_geometry(self.meshes)
        return self._geometry

    @property
    def triangle_count(self) -> int:
        return sum(len(m.faces) for m in self.meshes)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        pts = np.concatenate([m.vertices for m in self.meshes]) if self.meshes else np.zeros((1, 3))
        return pts.min(axis=0), pts.max(axis=0)

    @property
    def diagonal(self) -> float:
        lo, hi = self.bounds
        return float(np.linalg.norm(hi - lo)) or 1.0

    @property
    def epsilon(self) -> float:
        return 1e-4 * self.diagonal

    @property
    def packed_materials(self) -> np.ndarray:
        return pack_materials(self.materials)

    def light_frame(self, light: SpotLight) -> np.ndarray:
        """Rows u, v, w of the light's frustum frame (w = light direction).

        The frustum roll follows the camera so that rigidly moving the whole
        scene moves the RSM layout with it.
        """
        w = np.asarray(light.direction)
        ref = np.asarray(self.camera.up, dtype=np.float64)
        ref = ref / np.linalg.norm(ref)
        if abs(float(ref @ w)) > 0.99:
            ref = self.camera.forward
        u = np.cross(ref, w)
        u /= np.linalg.norm(u)
        return np.stack([u, np.cross(w, u), w])

    def transformed(self, rotation, translation=(0.0, 0.0, 0.0)) -> "Scene":
        """Rigidly move geometry, lights and camera."""
        R = np.asarray(rotation, dtype=np.float64)
        t = np.asarray(translation, dtype=np.float64)

        def pt(p):
            return tuple(R @ np.asarray(p, dtype=np.float64) + t)

        def vec(v):
            return tuple(R @ np.asarray(v, dtype=np.float64))

        meshes = [
            replace(m, vertices=m.vertices @ R.T + t, normals=m.normals @ R.T) for m in self.meshes
        ]
        lights = [replace(l, position=pt(l.position), direction=vec(l.direction)) for l in self.lights]
        cam = replace(
            self.camera, position=pt(self.camera.position), look_at=pt(self.camera.look_at),
            up=vec(self.camera.up),
        )
        return Scene(meshes, list(self.materials), lights, cam)


def validate(scene: Scene) -> None:
    if not scene.lights:
        raise SceneError("scene needs at least one light")
    for mesh in scene.meshes:
        if not 0 <= mesh.material < len(scene.materials):
            raise SceneError(
                f"mesh {mesh.name!r} uses material {mesh.material}, "
                f"but only {len(scene.materials)} materials exist"
            )
        norms = np.linalg.norm(mesh.normals, axis=-1)
        if mesh.normals.size and np.max(np.abs(norms - 1.0)) > 1e-6:
            raise SceneError(f"mesh {mesh.name!r} has non-unit normals")
    cam = scene.camera
    if cam.width < 1 or cam.height < 1:
        raise SceneError("camera resolution must be positive")
    if not 0.0 < cam.vfov_deg < 180.0:
        raise SceneError("camera vfov_deg must lie in (0, 180)")
    cam.basis()


# ---------------------------------------------------------------------------
# loading


def load_obj(path, material: int = 0) -> Mesh:
    """Read the v / vn / f subset of Wavefront OBJ (triangles only)."""
    path = Path(path)
    verts, vnorms, faces, fnorms = [], [], [], []
    try:
        text = path.read_text()
    except OSError as exc:
        raise SceneError(f"{path}: {exc.strerror or exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        where = f"{path}:{lineno}"
        if tag in ("v", "vn"):
            if len(rest) < 3:
                raise SceneError(f"{where}: {tag} record needs 3 numbers")
            try:
                xyz = [float(x) for x in rest[:3]]
            except ValueError as exc:
                raise SceneError(f"{where}: bad number in {tag} record") from exc
            (verts if tag == "v" else vnorms).append(xyz)
        elif tag == "f":
            if len(rest) != 3:
                raise SceneError(f"{where}: only triangles are supported, got {len(rest)} vertices")
            vi, ni = [], []
            for corner in rest:
                parts = corner.split("/")
                try:
                    v = int(parts[0])
                    n = int(parts[2]) if len(parts) >= 3 and parts[2] else 0
                except ValueError as exc:
                    raise SceneError(f"{where}: bad face index {corner!r}") from exc
                if v < 1 or v > len(verts):
                    raise SceneError(f"{where}: vertex index {v} out of range")
                if n < 0 or n > len(vnorms):
                    raise SceneError(f"{where}: normal index {n} out of range")
                vi.append(v - 1)
                ni.append(n - 1)
            faces.append(vi)
            fnorms.append(ni)
        else:
            raise SceneError(f"{where}: unsupported record {tag!r}")
    V = np.array(verts, dtype=np.float64).reshape(-1, 3)
    F = np.array(faces, dtype=np.int64).reshape(-1, 3)
    VN = np.array(vnorms, dtype=np.float64).reshape(-1, 3)
    normals = np.empty((len(F), 3, 3))
    for k, (f, fn) in enumerate(zip(F, fnorms)):
        a, b, c = V[f]
        g = np.cross(b - a, c - a)
        gl = np.linalg.norm(g)
        if gl == 0.0:
            raise SceneError(f"{path}: face {k + 1} is degenerate")
        g /= gl
        for corner in range(3):
            if fn[corner] >= 0:
                nv = VN[fn[corner]]
                nl = np.linalg.norm(nv)
                if nl == 0.0:
                    raise SceneError(f"{path}: zero-length normal on face {k + 1}")
                normals[k, corner] = nv / nl
            else:
                normals[k, corner] = g
    return Mesh(path.name, V, F, normals, material)


def _vec3(sec: dict, key: str, where: str) -> tuple:
    if key not in sec:
        raise SceneError(f"{where}: missing field {key!r}")
    v = sec[key]
    if not isinstance(v, (list, tuple)) or len(v) != 3:
        raise SceneError(f"{where}.{key}: expected 3 numbers")
    try:
        return tuple(float(x) for x in v)
    except (TypeError, ValueError) as exc:
        raise SceneError(f"{where}.{key}: expected 3 numbers") from exc


def _field(sec: dict, key: str, where: str, kind=float, default=None):
    if key not in sec:
        if default is not None:
            return default
        raise SceneError(f"{where}: missing field {key!r}")
    try:
        return kind(sec[key])
    except (TypeError, ValueError) as exc:
        raise SceneError(f"{where}.{key}: expected {kind.__name__}") from exc


def resolve_scene_path(path) -> Path:
    key = str(path)
    if key in BUILTIN_SCENES:
        return BUILTIN_SCENES[key]
    return Path(path)


def load_scene(path) -> Scene:
    """Parse a TOML scene description; mesh paths are relative to the file."""
    path = resolve_scene_path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except OSError as exc:
        raise SceneError(f"{path}: {exc.strerror or exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise SceneError(f"{path}: {exc}") from exc
    base = path.parent

    materials = []
    for i, sec in enumerate(doc.get("materials", [])):
        where = f"materials[{i}]"
        try:
            materials.append(
                BrdfModel(
                    kind=_field(sec, "kind", where, str),
                    albedo=_vec3(sec, "albedo", where),
                    roughness=_field(sec, "roughness", where, float, 0.5),
                    eta=_field(sec, "eta", where, float, 1.5),
                )
            )
        except ValueError as exc:
            raise SceneError(f"{where}: {exc}") from exc

    meshes = []
    for i, sec in enumerate(doc.get("meshes", [])):
        where = f"meshes[{i}]"
        obj = _field(sec, "obj", where, str)
        mesh = load_obj(base / obj, _field(sec, "material", where, int))
        meshes.append(mesh)

    lights = []
    for i, sec in enumerate(doc.get("lights", [])):
        where = f"lights[{i}]"
        lights.append(
            SpotLight(
                position=_vec3(sec, "position", where),
                direction=_vec3(sec, "direction", where),
                half_angle=math.radians(_field(sec, "half_angle_deg", where)),
                power=_vec3(sec, "power", where),
                rsm_resolution=_field(sec, "rsm_resolution", where, int, 256),
            )
        )

    if "camera" not in doc:
        raise SceneError(f"{path}: missing [camera] section")
    sec = doc["camera"]
    camera = Camera(
        position=_vec3(sec, "position", "camera"),
        look_at=_vec3(sec, "look_at", "camera"),
        up=_vec3(sec, "up", "camera") if "up" in sec else (0.0, 1.0, 0.0),
        vfov_deg=_field(sec, "vfov_deg", "camera"),
        width=_field(sec, "width", "camera", int),
        height=_field(sec, "height", "camera", int),
    )
    return Scene(meshes, materials, lights, camera)


# ---------------------------------------------------------------------------
# BVH


def build_geometry(meshes: list[Mesh]) -> Geometry:
    tris, norms, mats = [], [], []
    for m in meshes:
        tris.append(m.vertices[m.faces])
        norms.append(m.normals)
        mats.append(np.full(len(m.faces), m.material, dtype=np.int64))
    if tris:
        T = np.concatenate(tris)
        N = np.concatenate(norms)
        M = np.concatenate(mats)
    else:
        T = np.zeros((0, 3, 3))
        N = np.zeros((0, 3, 3))
        M = np.zeros(0, dtype=np.int64)
    ng = np.cross(T[:, 1] - T[:, 0], T[:, 2] - T[:, 0]) if len(T) else np.zeros((0, 3))
    if len(T):
        ng /= np.linalg.norm(ng, axis=1, keepdims=True)

    lo_all = T.min(axis=1) if len(T) else np.zeros((0, 3))
    hi_all = T.max(axis=1) if len(T) else np.zeros((0, 3))
    cent = T.mean(axis=1) if len(T) else np.zeros((0, 3))
    order = np.arange(len(T))
    nodes = []  # [min, max, left, right, start, count]

    def build(start, end):
        idx = len(nodes)
        sel = order[start:end]
        lo = lo_all[sel].min(axis=0) if end > start else np.zeros(3)
        hi = hi_all[sel].max(axis=0) if end > start else np.zeros(3)
        nodes.append([lo, hi, -1, -1, start, end - start])
        if end - start <= LEAF_SIZE:
            return idx
        c = cent[sel]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        # stable sort keeps lower triangle indices first among ties
        order[start:end] = sel[np.argsort(c[:, axis], kind="stable")]
        mid = (start + end) // 2
        nodes[idx][4], nodes[idx][5] = start, 0
        nodes[idx][2] = build(start, mid)
        nodes[idx][3] = build(mid, end)
        return idx

    build(0, len(T))
    T = np.ascontiguousarray(T)
    return Geometry(
        v0=np.ascontiguousarray(T[:, 0]),
        e1=np.ascontiguousarray(T[:, 1] - T[:, 0]),
        e2=np.ascontiguousarray(T[:, 2] - T[:, 0]),
        n0=np.ascontiguousarray(N[:, 0]),
        n1=np.ascontiguousarray(N[:, 1]),
        n2=np.ascontiguousarray(N[:, 2]),
        ng=np.ascontiguousarray(ng),
        mat=M,
        node_min=np.array([n[0] for n in nodes]).reshape(-1, 3),
        node_max=np.array([n[1] for n in nodes]).reshape(-1, 3),
        node_left=np.array([n[2] for n in nodes], dtype=np.int64),
        node_right=np.array([n[3] for n in nodes], dtype=np.int64),
        node_start=np.array([n[4] for n in nodes], dtype=np.int64),
        node_count=np.array([n[5] for n in nodes], dtype=np.int64),
        order=order.astype(np.int64),
    )


# Barycentric slack: neighbouring triangles overlap by a hair, so a ray
# through a shared edge cannot slip between them in any rigid frame.
EDGE_TOL = 1e-9


@njit(cache=True, nogil=True)
def tri_hit(g, k, ox, oy, oz, dx, dy, dz):
    """Moller-Trumbore; returns (t, u, v) with t = inf on a miss."""
    e1x, e1y, e1z = g.e1[k, 0], g.e1[k, 1], g.e1[k, 2]
    e2x, e2y, e2z = g.e2[k, 0], g.e2[k, 1], g.e2[k, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < 1e-14:
        return np.inf, 0.0, 0.0
    inv = 1.0 / det
    sx = ox - g.v0[k, 0]
    sy = oy - g.v0[k, 1]
    sz = oz - g.v0[k, 2]
    u = (sx * px + sy * py + sz * pz) * inv
    if u < -EDGE_TOL or u > 1.0 + EDGE_TOL:
        return np.inf, 0.0, 0.0
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -EDGE_TOL or u + v > 1.0 + EDGE_TOL:
        return np.inf, 0.0, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    return t, u, v


@njit(cache=True, nogil=True)
def _box_hit(g, node, ox, oy, oz, ix, iy, iz, tmin, tmax):
    t0 = tmin
    t1 = tmax
    for a in range(3):
        o = ox if a == 0 else (oy if a == 1 else oz)
        inv = ix if a == 0 else (iy if a == 1 else iz)
        ta = (g.node_min[node, a] - o) * inv
        tb = (g.node_max[node, a] - o) * inv
        if ta > tb:
            ta, tb = tb, ta
        # NaN from 0 * inf leaves the slab unconstrained
        if ta == ta and ta > t0:
            t0 = ta
        if tb == tb and tb < t1:
            t1 = tb
        if t0 > t1 * (1.0 + 1e-12) + 1e-12:
            return False
    return True


@njit(cache=True, nogil=True)
def _inv(d):
    return 1.0 / d if d != 0.0 else np.inf


@njit(cache=True, nogil=True)
def bvh_nearest(g, ox, oy, oz, dx, dy, dz, tmin, tmax):
    """Nearest hit in (tmin, tmax): (t, triangle, u, v); triangle = -1 on miss."""
    best_t = tmax
    best_k = -1
    best_u = 0.0
    best_v = 0.0
    if g.node_min.shape[0] == 0 or g.v0.shape[0] == 0:
        return np.inf, -1, 0.0, 0.0
    ix, iy, iz = _inv(dx), _inv(dy), _inv(dz)
    stack = np.empty(STACK_DEPTH, dtype=np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if not _box_hit(g, node, ox, oy, oz, ix, iy, iz, tmin, best_t):
            continue
        cnt = g.node_count[node]
        if cnt > 0:
            s = g.node_start[node]
            for j in range(s, s + cnt):
                k = g.order[j]
                t, u, v = tri_hit(g, k, ox, oy, oz, dx, dy, dz)
                if t > tmin and (t < best_t or (t == best_t and k < best_k)):
                    if t < tmax:
                        best_t = t
                        best_k = k
                        best_u = u
                        best_v = v
        else:
            stack[sp] = g.node_left[node]
            sp += 1
            stack[sp] = g.node_right[node]
            sp += 1
    if best_k < 0:
        return np.inf, -1, 0.0, 0.0
    return best_t, best_k, best_u, best_v


@njit(cache=True, nogil=True)
def bvh_any(g, ox, oy, oz, dx, dy, dz, tmin, tmax):
    if g.node_min.shape[0] == 0 or g.v0.shape[0] == 0:
        return False
    ix, iy, iz = _inv(dx), _inv(dy), _inv(dz)
    stack = np.empty(STACK_DEPTH, dtype=np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if not _box_hit(g, node, ox, oy, oz, ix, iy, iz, tmin, tmax):
            continue
        cnt = g.node_count[node]
        if cnt > 0:
            s = g.node_start[node]
            for j in range(s, s + cnt):
                t, u, v = tri_hit(g, g.order[j], ox, oy, oz, dx, dy, dz)
                if tmin < t < tmax:
                    return True
        else:
            stack[sp] = g.node_left[node]
            sp += 1
            stack[sp] = g.node_right[node]
            sp += 1
    return False


@njit(cache=True, nogil=True)
def bvh_all(g, ox, oy, oz, dx, dy, dz, tmin, tmax, out_t, out_k, out_u, out_v):
    """Every hit in (tmin, tmax), unsorted; returns the count (capped)."""
    n = 0
    if g.node_min.shape[0] == 0 or g.v0.shape[0] == 0:
        return 0
    ix, iy, iz = _inv(dx), _inv(dy), _inv(dz)
    stack = np.empty(STACK_DEPTH, dtype=np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if not _box_hit(g, node, ox, oy, oz, ix, iy, iz, tmin, tmax):
            continue
        cnt = g.node_count[node]
        if cnt > 0:
            s = g.node_start[node]
            for j in range(s, s + cnt):
                k = g.order[j]
                t, u, v = tri_hit(g, k, ox, oy, oz, dx, dy, dz)
                if tmin < t < tmax and n < out_t.shape[0]:
                    out_t[n] = t
                    out_k[n] = k
                    out_u[n] = u
                    out_v[n] = v
                    n += 1
        else:
            stack[sp] = g.node_left[node]
            sp += 1
            stack[sp] = g.node_right[node]
            sp += 1
    return n


@njit(cache=True, nogil=True)
def brute_nearest(g, ox, oy, oz, dx, dy, dz, tmin, tmax):
    best_t = tmax
    best_k = -1
    for k in range(g.v0.shape[0]):
        t, u, v = tri_hit(g, k, ox, oy, oz, dx, dy, dz)
        if tmin < t < best_t:
            best_t = t
            best_k = k
    if best_k < 0:
        return np.inf, -1
    return best_t, best_k


@njit(cache=True, nogil=True)
def shading_normal(g, k, u, v):
    w = 1.0 - u - v
    x = w * g.n0[k, 0] + u * g.n1[k, 0] + v * g.n2[k, 0]
    y = w * g.n0[k, 1] + u * g.n1[k, 1] + v * g.n2[k, 1]
    z = w * g.n0[k, 2] + u * g.n1[k, 2] + v * g.n2[k, 2]
    n = math.sqrt(x * x + y * y + z * z)
    if n == 0.0:
        return g.ng[k, 0], g.ng[k, 1], g.ng[k, 2]
    return x / n, y / n, z / n


@njit(cache=True, nogil=True)
def cast_rays(g, origins, dirs, tmin, t_out, k_out, p_out, n_out):
    """Nearest hits for a batch; normals are the interpolated shading normals."""
    for i in range(dirs.shape[0]):
        ox, oy, oz = origins[i, 0], origins[i, 1], origins[i, 2]
        dx, dy, dz = dirs[i, 0], dirs[i, 1], dirs[i, 2]
        t, k, u, v = bvh_nearest(g, ox, oy, oz, dx, dy, dz, tmin, np.inf)
        t_out[i] = t
        k_out[i] = k
        if k >= 0:
            p_out[i, 0] = ox + t * dx
            p_out[i, 1] = oy + t * dy
            p_out[i, 2] = oz + t * dz
            nx, ny, nz = shading_normal(g, k, u, v)
            n_out[i, 0] = nx
            n_out[i, 1] = ny
            n_out[i, 2] = nz


# ---------------------------------------------------------------------------
# Python-level queries


def intersect(scene: Scene, ray: Ray) -> Hit | None:
    g = scene.geometry
    o, d = ray.origin, ray.direction
    t, k, u, v = bvh_nearest(g, o[0], o[1], o[2], d[0], d[1], d[2], ray.t_min, ray.t_max)
    if k < 0:
        return None
    n = np.array(shading_normal(g, k, u, v))
    return Hit(float(t), o + t * d, n, int(g.mat[k]), int(k))


def intersect_brute(scene: Scene, ray: Ray) -> tuple[float, int] | None:
    g = scene.geometry
    o, d = ray.origin, ray.direction
    t, k = brute_nearest(g, o[0], o[1], o[2], d[0], d[1], d[2], ray.t_min, ray.t_max)
    return None if k < 0 else (float(t), int(k))


def occluded(scene: Scene, a, b) -> bool:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = b - a
    dist = float(np.linalg.norm(d))
    if dist == 0.0:
        raise ValueError("occlusion query needs distinct endpoints")
    d /= dist
    eps = scene.epsilon
    if dist <= 2 * eps:
        return False
    return bool(bvh_any(scene.geometry, a[0], a[1], a[2], d[0], d[1], d[2], eps, dist - eps))
