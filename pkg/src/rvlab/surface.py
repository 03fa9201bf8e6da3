"""Piecewise-flat surfaces with vertex conformal factors, the conformal
W-functional and the normalized Ricci flow."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .fuchsian import StructuralError, disk_to_uhp, octagon_group, uhp_to_disk

log = logging.getLogger(__name__)

_GL_CACHE: dict = {}


class DegenerateMetricError(ValueError):
    pass


class PathError(ValueError):
    def __init__(self, t: float, msg: str):
        super().__init__(f"degenerate metric at t = {t:.6g}: {msg}")
        self.t = t


class StiffnessError(RuntimeError):
    pass


@dataclass(frozen=True)
class DiscreteMetricSurface:
    """Closed triangulated surface; lengths are ``exp(phi_i + phi_j) l0_ij``.

    A uniform ``phi = c`` scales lengths by ``exp(2c)``, so the metric is
    ``exp(u) I_0`` with ``u = 4 phi``; variations are written in ``u``.
    ``lengths0[f, k]`` is the reference length of the edge of face ``f``
    opposite its local vertex ``k``.  Vertex areas are the dual areas
    ``dA/du_i``, so ``sum K_i da_i`` is the total angle
    defect and ``sum da_i`` the total area.
    """

    n_vertices: int
    faces: np.ndarray
    lengths0: np.ndarray
    genus: int
    phi: np.ndarray
    cusps: tuple = ()

    def __post_init__(self):
        faces = np.asarray(self.faces, dtype=np.int64)
        l0 = np.asarray(self.lengths0, dtype=float)
        phi = np.zeros(self.n_vertices) if self.phi is None else np.asarray(self.phi, dtype=float)
        if faces.ndim != 2 or faces.shape[1] != 3 or l0.shape != faces.shape:
            raise StructuralError("faces and reference lengths must be (F, 3)")
        if phi.shape != (self.n_vertices,):
            raise StructuralError("phi must have one value per vertex")
        if faces.min() < 0 or faces.max() >= self.n_vertices:
            raise StructuralError("face index out of range")
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "lengths0", l0)
        object.__setattr__(self, "phi", phi)
        if self.euler_characteristic != 2 - 2 * self.genus:
            raise StructuralError(f"V - E + F = {self.euler_characteristic} does not match genus {self.genus}")
        Geometry.compute(self, phi)  # triangle inequality and positive vertex areas

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def euler_characteristic(self) -> int:
        # every edge of a closed surface borders two faces
        return self.n_vertices - 3 * self.n_faces // 2 + self.n_faces

    @property
    def chi(self) -> int:
        return 2 - 2 * self.genus

    def with_phi(self, phi) -> "DiscreteMetricSurface":
        return replace(self, phi=np.asarray(phi, dtype=float))

    def geometry(self, phi=None) -> "Geometry":
        return Geometry.compute(self, self.phi if phi is None else phi)

    @property
    def K(self) -> np.ndarray:
        return self.geometry().K

    @property
    def da(self) -> np.ndarray:
        return self.geometry().da


@dataclass
class Geometry:
    lengths: np.ndarray
    angles: np.ndarray
    defect: np.ndarray
    da: np.ndarray
    face_area: np.ndarray

    @property
    def K(self) -> np.ndarray:
        return self.defect / self.da

    @property
    def area(self) -> float:
        return float(self.face_area.sum())

    @classmethod
    def compute(cls, s: DiscreteMetricSurface, phi) -> "Geometry":
        phi = np.asarray(phi, dtype=float)
        F = s.faces
        # edge opposite vertex k joins the other two
        pf = phi[F]
        L = s.lengths0 * np.exp(pf[:, [1, 2, 0]] + pf[:, [2, 0, 1]])
        a, b, c = L[:, 0], L[:, 1], L[:, 2]
        slack = np.minimum.reduce([b + c - a, c + a - b, a + b - c])
        if np.any(slack <= 1e-12 * L.max(axis=1)):
            bad = int(np.argmin(slack / L.max(axis=1)))
            raise DegenerateMetricError(f"triangle inequality fails on face {bad} {F[bad].tolist()}")
        L2 = L * L
        cosA = (L2[:, [1, 2, 0]] + L2[:, [2, 0, 1]] - L2) / (2 * L[:, [1, 2, 0]] * L[:, [2, 0, 1]])
        ang = np.arccos(np.clip(cosA, -1.0, 1.0))
        s2 = 0.5 * (a + b + c)
        area = np.sqrt(np.maximum(s2 * (s2 - a) * (s2 - b) * (s2 - c), 0.0))
        cot = 1.0 / np.tan(ang)
        # dA_f/du_i = (l_ij^2 cot theta_k + l_ik^2 cot theta_j) / 8
        half = 0.125 * L2 * cot
        local = half[:, [1, 2, 0]] + half[:, [2, 0, 1]]
        n = s.n_vertices
        da = np.bincount(F.ravel(), weights=local.ravel(), minlength=n)
        total = np.bincount(F.ravel(), weights=ang.ravel(), minlength=n)
        if np.any(da <= 0):
            raise DegenerateMetricError(f"non-positive dual area at vertex {int(np.argmin(da))}")
        return cls(L, ang, 2 * np.pi - total, da, area)


def gauss_bonnet_residual(s: DiscreteMetricSurface, phi=None) -> float:
    g = s.geometry(phi)
    return float(np.sum(g.K * g.da) - 2 * np.pi * s.chi)


def w_first_variation(s: DiscreteMetricSurface, u) -> float:
    """``-1/4 sum K_i u_i da_i`` for the variation ``delta I = u I``."""
    g = s.geometry()
    return -0.25 * float(np.dot(g.K * g.da, np.asarray(u, dtype=float)))


def _gauss_legendre(n: int):
    if n not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (0.5 * (x + 1), 0.5 * w)
    return _GL_CACHE[n]


@dataclass
class WChange:
    value: float
    error: float
    nodes: int


def _segment(s: DiscreteMetricSurface, phi0, u, n: int, t0=0.0, t1=1.0) -> float:
    x, w = _gauss_legendre(n)
    total = 0.0
    for xi, wi in zip(x, w):
        try:
            g = Geometry.compute(s, phi0 + 0.25 * xi * u)
        except DegenerateMetricError as exc:
            raise PathError(t0 + xi * (t1 - t0), str(exc)) from exc
        total += wi * float(np.dot(g.defect, u))
    return -0.25 * total


def w_conformal_change(s: DiscreteMetricSurface, u, n: int = 4) -> WChange:
    """``W[u] - W[0]`` along ``t -> t u`` (log conformal factor ``4 phi + t u``).

    Gauss-Legendre with ``n`` and ``2n`` nodes; the ``2n`` value is returned
    and the difference serves as the error estimate.
    """
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        return WChange(0.0, 0.0, 2 * n)
    lo = _segment(s, s.phi, u, n)
    hi = _segment(s, s.phi, u, 2 * n)
    return WChange(hi, abs(hi - lo), 2 * n)


def w_path_change(s: DiscreteMetricSurface, waypoints, n: int = 8) -> float:
    """W change along the piecewise-linear path ``0 -> u_1 -> ... -> u_m``."""
    total = 0.0
    prev = np.zeros(s.n_vertices)
    for u in waypoints:
        u = np.asarray(u, dtype=float)
        total += w_conformal_change(s.with_phi(s.phi + 0.25 * prev), u - prev, n).value
        prev = u
    return total


@dataclass
class Witness:
    u: np.ndarray
    variation: float
    vertices: tuple


def nonuniqueness_witness(s: DiscreteMetricSurface, tol: float = 1e-10) -> Witness | None:
    """A zero-mean variation concentrated at the extreme-curvature vertices
    that strictly increases W; ``None`` when K is constant to ``tol``."""
    g = s.geometry()
    K = g.K
    hi, lo = int(np.argmax(K)), int(np.argmin(K))
    if K[hi] - K[lo] <= tol:
        return None
    u = np.zeros(s.n_vertices)
    u[lo] = 1.0 / g.da[lo]
    u[hi] = -1.0 / g.da[hi]
    return Witness(u, w_first_variation(s, u), (lo, hi))


def w_rate(g: Geometry, chi: int) -> float:
    """``1/4 (sum K^2 da - (2 pi chi)^2 / A)``."""
    return 0.25 * (float(np.sum(g.K**2 * g.da)) - (2 * np.pi * chi) ** 2 / g.area)


@dataclass
class FlowPolicy:
    dt: float = 0.01
    dt_max: float = 0.05
    growth: float = 1.25
    tol: float = 1e-4
    max_steps: int = 20000
    max_halvings: int = 10
    consistency: float = 0.02
    slack: float = 1e-10
    quad_nodes: int = 2

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class FlowTrace:
    rows: list = field(default_factory=list)
    reason: str = ""
    surface: DiscreteMetricSurface | None = None
    rejections: int = 0

    COLUMNS = ("step", "t", "W", "max_dev", "area", "dt", "dW", "dW_predicted", "gauss_bonnet")

    def column(self, name: str) -> np.ndarray:
        i = self.COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    def write_csv(self, path, comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(self.COLUMNS)
            for r in self.rows:
                wr.writerow([r[0]] + [repr(float(x)) for x in r[1:]])

    def summary(self) -> dict:
        W = self.column("W")
        dev = self.column("max_dev")
        return {
            "steps": len(self.rows) - 1,
            "reason": self.reason,
            "rejections": self.rejections,
            "W_final": float(W[-1]),
            "max_dev_final": float(dev[-1]),
            "min_dW": float(np.min(np.diff(W))) if len(W) > 1 else 0.0,
            "area_drift": float(np.max(np.abs(self.column("area") - self.rows[0][4]))),
            "gauss_bonnet_max": float(np.max(np.abs(self.column("gauss_bonnet")))),
        }


def ricci_flow(s: DiscreteMetricSurface, policy: FlowPolicy | None = None) -> FlowTrace:
    """Area-normalized flow ``du/dt = -(K - Kbar)`` on ``u = 4 phi``.

    Explicit Euler followed by a uniform rescale back to the initial area.
    A step is rejected, and ``dt`` halved, when W decreases, a triangle
    degenerates, or the measured W change departs from the rate formula by
    more than ``policy.consistency``.
    """
    p = policy or FlowPolicy()
    if s.chi >= 0:
        raise StructuralError("flow needs negative Euler characteristic")
    phi = s.phi.copy()
    g = s.geometry(phi)
    A0 = g.area
    W = 0.0
    t = 0.0
    dt = p.dt
    trace = FlowTrace()

    def dev(g):
        Kbar = 2 * np.pi * s.chi / g.area
        return float(np.max(np.abs(g.K - Kbar)))

    def gb(g):
        return float(np.sum(g.defect) - 2 * np.pi * s.chi)

    trace.rows.append((0, 0.0, 0.0, dev(g), g.area, 0.0, 0.0, 0.0, gb(g)))
    step = 0
    while dev(g) >= p.tol:
        if step >= p.max_steps:
            trace.reason = "max_steps"
            break
        Kbar = 2 * np.pi * s.chi / g.area
        udot = -(g.K - Kbar)
        rate = w_rate(g, s.chi)
        halvings = 0
        while True:
            cand = phi + 0.25 * dt * udot
            ok = True
            try:
                gc = s.geometry(cand)
                cand = cand + 0.25 * np.log(A0 / gc.area)
                gc = s.geometry(cand)
                dW = w_conformal_change(s.with_phi(phi), 4 * (cand - phi), p.quad_nodes).value
            except (DegenerateMetricError, PathError):
                ok = False
            if ok:
                pred = rate * dt
                ok = dW >= -p.slack and abs(dW - pred) <= p.consistency * abs(pred) + 1e-14
            if ok:
                break
            halvings += 1
            trace.rejections += 1
            if halvings >= p.max_halvings:
                raise StiffnessError(f"step rejected {halvings} times at t = {t:.6g} (dt = {dt:.3g})")
            dt *= 0.5
        phi, g = cand, gc
        t += dt
        W += dW
        step += 1
        trace.rows.append((step, t, W, dev(g), g.area, dt, dW, pred, gb(g)))
        if halvings == 0:
            dt = min(dt * p.growth, p.dt_max)
    else:
        trace.reason = "converged"
    trace.surface = s.with_phi(phi)
    return trace


# --- meshes -----------------------------------------------------------------


def _hyp_dist_disk(z, w):
    return 2 * np.arctanh(np.abs(z - w) / np.abs(1 - np.conj(z) * w))


def _geodesic_point(a, b, s):
    """Point at arclength fraction ``s`` on the disk geodesic from ``a`` to ``b``."""
    bb = (b - a) / (1 - np.conj(a) * b)
    r = np.tanh(s * np.arctanh(np.abs(bb)))
    p = r * bb / np.abs(bb)
    return (p + a) / (1 + np.conj(a) * p)


def octagon_mesh(k: int = 12, phi=None, expo: float = 0.75) -> tuple[DiscreteMetricSurface, np.ndarray]:
    """Genus-2 triangulation of the regular octagon with its side pairings.

    Each of the 8 sectors (centre and one side) is split into ``k^2``
    triangles; reference lengths are hyperbolic distances, so the starting
    metric is close to constant curvature.  Returns the surface and the
    disk position of each vertex (one representative).
    """
    if k < 3:
        raise StructuralError("octagon mesh needs k >= 3")
    grp = octagon_group()
    dom = grp.fundamental_domain
    V = dom.disk_vertices()
    keys: dict = {}
    pos: list = []

    def vid(key, z):
        if key not in keys:
            keys[key] = len(pos)
            pos.append(z)
        return keys[key]

    # side k+4 is carried onto side k by a generator; find the parameter map
    gens = grp.generators
    flip = []
    for j in range(4):
        a, b = V[(j + 3) % 8], V[(j + 4) % 8]
        mid = _geodesic_point(a, b, 0.25)
        zz = disk_to_uhp(mid)[0]
        img = None
        for gm in list(gens) + [g.inverse() for g in gens]:
            w = uhp_to_disk(gm(zz))[0]
            c0, c1 = V[(j - 1) % 8], V[j % 8]
            if np.isclose(_hyp_dist_disk(w, c0) + _hyp_dist_disk(w, c1), _hyp_dist_disk(c0, c1), atol=1e-9):
                img = _hyp_dist_disk(w, c0) / _hyp_dist_disk(c0, c1)
                break
        if img is None:
            raise StructuralError("side pairing not found")
        flip.append(bool(np.isclose(img, 0.75)))

    def key_of(sector, r, j):
        if r == 0:
            return ("c",)
        if j == 0 or j == r:
            m = (sector - 1) % 8 if j == 0 else sector % 8
            return ("corner",) if r == k else ("rad", m, r)
        if r == k:
            side = sector % 8
            if side < 4:
                return ("side", side, j)
            return ("side", side - 4, k - j if flip[side - 4] else j)
        return ("int", sector, r, j)

    faces, lens = [], []
    for sec in range(8):
        a, b = V[(sec - 1) % 8], V[sec]

        def point(r, j):
            if r == 0:
                return 0j
            edge = _geodesic_point(a, b, j / r)
            return edge * (r / k) ** expo

        for r in range(k):
            for j in range(r + 1):
                tris = [((r, j), (r + 1, j), (r + 1, j + 1))]
                if j < r:
                    tris.append(((r, j), (r + 1, j + 1), (r, j + 1)))
                for tri in tris:
                    zs = [point(*q) for q in tri]
                    ids = [vid(key_of(sec, *q), point(*q)) for q in tri]
                    # counter-clockwise in the disk
                    if np.imag((zs[1] - zs[0]) * np.conj(zs[2] - zs[0])) > 0:
                        zs = [zs[0], zs[2], zs[1]]
                        ids = [ids[0], ids[2], ids[1]]
                    faces.append(ids)
                    lens.append([_hyp_dist_disk(zs[1], zs[2]), _hyp_dist_disk(zs[2], zs[0]), _hyp_dist_disk(zs[0], zs[1])])
    n = len(pos)
    surf = DiscreteMetricSurface(n, np.array(faces), np.array(lens), 2, np.zeros(n) if phi is None else phi)
    return surf, np.array(pos)


def vertex_neighbors(s: DiscreteMetricSurface) -> list:
    nb = [set() for _ in range(s.n_vertices)]
    for f in s.faces:
        for i in range(3):
            nb[f[i]].update((f[(i + 1) % 3], f[(i + 2) % 3]))
    return [sorted(x) for x in nb]


def random_perturbation(s: DiscreteMetricSurface, amplitude: float, rng: np.random.Generator, smoothing: int = 10) -> np.ndarray:
    """Random vertex field with ``max |phi| = amplitude``.

    Uniform noise is averaged over one-rings ``smoothing`` times so that
    neighbouring factors stay comparable and triangles remain valid.
    """
    x = rng.uniform(-1.0, 1.0, s.n_vertices)
    nb = vertex_neighbors(s)
    for _ in range(smoothing):
        x = np.array([0.5 * x[i] + 0.5 * np.mean(x[n]) for i, n in enumerate(nb)])
    x -= x.mean()
    return amplitude * x / np.max(np.abs(x))


# --- plain-text mesh format ---------------------------------------------------


def write_mesh(path, s: DiscreteMetricSurface) -> None:
    """``genus``, ``vertices``, ``faces`` headers, then one line per face
    (three vertex ids and the opposite-edge reference lengths), then
    ``phi`` and one value per line."""
    lines = ["# rvlab mesh v1", f"genus {s.genus}", f"vertices {s.n_vertices}", f"faces {s.n_faces}"]
    for f, l in zip(s.faces, s.lengths0):
        lines.append(f"{f[0]} {f[1]} {f[2]} {float(l[0])!r} {float(l[1])!r} {float(l[2])!r}")
    lines.append("phi")
    lines.extend(repr(float(x)) for x in s.phi)
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> DiscreteMetricSurface:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    try:
        head = {r[0]: int(r[1]) for r in rows[:3]}
        nf, nv = head["faces"], head["vertices"]
        body = rows[3 : 3 + nf]
        faces = np.array([[int(x) for x in r[:3]] for r in body])
        lens = np.array([[float(x) for x in r[3:6]] for r in body])
        if rows[3 + nf] != ["phi"]:
            raise ValueError("missing phi section")
        phi = np.array([float(r[0]) for r in rows[4 + nf : 4 + nf + nv]])
    except (KeyError, IndexError, ValueError) as exc:
        raise StructuralError(f"{path}: malformed mesh ({exc})") from exc
    return DiscreteMetricSurface(nv, faces, lens, head["genus"], phi)


def write_flow_summary(path, trace: FlowTrace, extra: dict | None = None) -> None:
    d = {"schema": 1, **trace.summary(), **(extra or {})}
    Path(path).write_text(json.dumps(d, indent=2, sort_keys=True))
