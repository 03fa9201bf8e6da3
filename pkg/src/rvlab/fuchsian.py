"""Fuchsian groups, hyperbolic densities, Poincare series and the RQ inner product."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .tensors import MetricField, pointwise_inner


class DomainError(ValueError):
    pass


class StructuralError(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


INFINITY = complex(np.inf, 0.0)

# Cayley transform disk -> upper half-plane, w |-> i (1 + w) / (1 - w)
_CAYLEY = np.array([[1j, 1j], [-1.0, 1.0]])


@dataclass(frozen=True)
class MoebiusMap:
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        det = self.a * self.d - self.b * self.c
        if abs(det - 1.0) > 1e-9 * max(1.0, abs(self.a * self.d)):
            raise StructuralError(f"determinant {det!r} is not 1")

    @classmethod
    def from_matrix(cls, m, normalize: bool = True) -> "MoebiusMap":
        m = np.asarray(m, dtype=float)
        if normalize:
            det = np.linalg.det(m)
            if det <= 0:
                raise StructuralError("matrix must have positive determinant")
            m = m / np.sqrt(det)
        return cls(*map(float, m.ravel()))

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    def __matmul__(self, other: "MoebiusMap") -> "MoebiusMap":
        return MoebiusMap.from_matrix(self.matrix @ other.matrix)

    def inverse(self) -> "MoebiusMap":
        return MoebiusMap(self.d, -self.b, -self.c, self.a)

    def __call__(self, z):
        return apply_moebius(self, z)[0]

    def key(self, decimals: int = 6) -> tuple:
        return tuple(_canonical_keys(self.matrix[None], decimals)[0])


def apply_moebius(A: MoebiusMap, z):
    """``(A z, A'(z))``; the pole of ``A`` is sent to ``INFINITY``."""
    z = np.asarray(z, dtype=complex)
    den = A.c * z + A.d
    pole = den == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        w = (A.a * z + A.b) / den
        dw = 1.0 / den**2
    if np.any(pole):
        w = np.where(pole, INFINITY, w)
        dw = np.where(pole, INFINITY, dw)
    if w.ndim == 0:
        return complex(w), complex(dw)
    return w, dw


def hyperbolic_density(model: str, z):
    """Density of the curvature -1 metric: ``1/y^2`` or ``4/(1-|z|^2)^2``."""
    z = np.asarray(z, dtype=complex)
    if model in ("uhp", "upper-half-plane"):
        if np.any(z.imag <= 0):
            raise DomainError("point not in the upper half-plane")
        out = 1.0 / z.imag**2
    elif model == "disk":
        r2 = np.abs(z) ** 2
        if np.any(r2 >= 1):
            raise DomainError("point not in the open unit disk")
        out = 4.0 / (1.0 - r2) ** 2
    else:
        raise DomainError(f"unknown model {model!r}")
    return float(out) if out.ndim == 0 else out


def disk_to_uhp(w):
    w = np.asarray(w, dtype=complex)
    return 1j * (1 + w) / (1 - w), 2j / (1 - w) ** 2


def uhp_to_disk(z):
    z = np.asarray(z, dtype=complex)
    return (z - 1j) / (z + 1j), 2j / (z + 1j) ** 2


def _canonical_keys(mats: np.ndarray, decimals: int = 6) -> np.ndarray:
    """Integer keys identifying matrices up to global sign."""
    flat = mats.reshape(-1, 4)
    # sign fixed by the first entry that is not ~0
    lead = np.where(np.abs(flat[:, 2]) > 1e-9, flat[:, 2], np.where(np.abs(flat[:, 3]) > 1e-9, flat[:, 3], flat[:, 0]))
    flat = flat * np.sign(lead)[:, None]
    return np.round(flat * 10**decimals).astype(np.int64)


@dataclass(frozen=True)
class FundamentalDomain:
    """Regular hyperbolic polygon centred at ``i`` (the disk origin).

    ``pairing[j] = (k, s)`` means side ``j`` is the image of side ``k`` under
    generator ``s`` (an index into the generator list; negative for inverses).
    """

    sides: int
    inradius: float
    circumradius: float
    pairing: tuple

    @cached_property
    def _side_circles(self):
        m = np.tanh(self.inradius / 2)
        c = (1 + m * m) / (2 * m)
        r = (1 - m * m) / (2 * m)
        angles = 2 * np.pi * np.arange(self.sides) / self.sides
        return c * np.exp(1j * angles), r, c

    def disk_vertices(self) -> np.ndarray:
        R = np.tanh(self.circumradius / 2)
        return R * np.exp(1j * (2 * np.arange(self.sides) + 1) * np.pi / self.sides)

    def vertices(self) -> np.ndarray:
        return disk_to_uhp(self.disk_vertices())[0]

    def contains_disk(self, w) -> np.ndarray:
        centers, r, _ = self._side_circles
        w = np.asarray(w, dtype=complex)
        return np.all(np.abs(w[..., None] - centers) > r, axis=-1) & (np.abs(w) < 1)

    def contains(self, z) -> np.ndarray:
        return self.contains_disk(uhp_to_disk(z)[0])

    def _radial_extent(self, theta):
        _, _, c = self._side_circles
        step = 2 * np.pi / self.sides
        beta = (theta + step / 2) % step - step / 2
        cb = c * np.cos(beta)
        return cb - np.sqrt(cb * cb - 1.0)

    def quadrature(self, order: int = 12, subdivisions: int = 1, model: str = "uhp"):
        """Product Gauss rule; returns ``(z, w)`` nodes in the upper half-plane
        (or the disk) with weights for ``dx dy``."""
        x, wx = np.polynomial.legendre.leggauss(order)
        step = 2 * np.pi / self.sides
        th_edges = np.linspace(-step / 2, 2 * np.pi - step / 2, self.sides * subdivisions + 1)
        h = 1.0 / subdivisions
        r_unit = np.concatenate([(x + 1) * h / 2 + k * h for k in range(subdivisions)])
        wr_unit = np.concatenate([wx * h / 2] * subdivisions)
        nodes, weights = [], []
        for a, b in zip(th_edges[:-1], th_edges[1:]):
            th = 0.5 * (b - a) * x + 0.5 * (a + b)
            wth = 0.5 * (b - a) * wx
            R = self._radial_extent(th)
            r = R[:, None] * r_unit[None, :]
            wgt = (wth * R)[:, None] * wr_unit[None, :] * r
            nodes.append((r * np.exp(1j * th[:, None])).ravel())
            weights.append(wgt.ravel())
        w = np.concatenate(nodes)
        wd = np.concatenate(weights)
        if model == "disk":
            return w, wd
        z, dz = disk_to_uhp(w)
        return z, wd * np.abs(dz) ** 2

    def monte_carlo(self, n: int, rng: np.random.Generator):
        """Uniform samples in the circumscribed disk: ``(z, weight, inside)``."""
        R = np.tanh(self.circumradius / 2)
        rad = R * np.sqrt(rng.random(n))
        ang = 2 * np.pi * rng.random(n)
        w = rad * np.exp(1j * ang)
        inside = self.contains_disk(w)
        z, dz = disk_to_uhp(w)
        return z, (np.pi * R * R / n) * np.abs(dz) ** 2, inside

    def random_points(self, n: int, rng: np.random.Generator) -> np.ndarray:
        out = []
        while sum(len(o) for o in out) < n:
            z, _, inside = self.monte_carlo(4 * n, rng)
            out.append(z[inside])
        return np.concatenate(out)[:n]


@dataclass(frozen=True)
class FuchsianGroup:
    generators: tuple
    fundamental_domain: FundamentalDomain
    word_length_cutoff: int = 4
    name: str = "custom"

    def all_generators(self) -> list[MoebiusMap]:
        return list(self.generators) + [g.inverse() for g in self.generators]

    def side_pairing_maps(self) -> list[MoebiusMap]:
        out = []
        for _, s in self.fundamental_domain.pairing:
            g = self.generators[abs(s) - 1]
            out.append(g if s > 0 else g.inverse())
        return out

    def spheres(self, cutoff: int | None = None) -> list[np.ndarray]:
        """Group elements sorted by word length, one ``(m, 2, 2)`` array per length."""
        cutoff = self.word_length_cutoff if cutoff is None else cutoff
        return _spheres(self, cutoff)

    def elements(self, cutoff: int | None = None) -> np.ndarray:
        return np.concatenate(self.spheres(cutoff))

    def config_hash(self) -> str:
        payload = {"gens": [list(g.matrix.ravel()) for g in self.generators], "name": self.name}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


_SPHERE_CACHE: dict = {}


_HASH_MIX = np.array([0x9E3779B97F4A7C15, 0xC2B2AE3D27D4EB4F, 0x165667B19E3779F9, 0x27D4EB2F165667C5], dtype=np.uint64)


def _key_hash(keys: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return keys.astype(np.uint64) @ _HASH_MIX


def _spheres(group: FuchsianGroup, cutoff: int) -> list[np.ndarray]:
    key = group.config_hash()
    cached = _SPHERE_CACHE.get(key, [])
    if len(cached) > cutoff:
        return cached[: cutoff + 1]
    if not cached:
        cached = [np.eye(2)[None]]
    if not group.generators:
        return cached
    gens = np.array([g.matrix for g in group.all_generators()])
    seen = np.concatenate([_key_hash(_canonical_keys(s)) for s in cached])
    while len(cached) <= cutoff:
        front = cached[-1]
        cand = np.einsum("gij,mjk->gmik", gens, front).reshape(-1, 2, 2)
        hashes = _key_hash(_canonical_keys(cand))
        _, first = np.unique(hashes, return_index=True)
        first.sort()
        cand, hashes = cand[first], hashes[first]
        fresh = ~np.isin(hashes, seen)
        cached.append(cand[fresh])
        seen = np.concatenate([seen, hashes[fresh]])
    _SPHERE_CACHE[key] = cached
    return cached[: cutoff + 1]


def regular_polygon_group(genus: int = 2) -> FuchsianGroup:
    """Opposite-side pairing group of the regular ``4g``-gon with angles ``2 pi/(4g)``."""
    n = 4 * genus
    alpha = 2 * np.pi / n
    r_in = np.arccosh(np.cos(alpha / 2) / np.sin(np.pi / n))
    r_circ = np.arccosh(1 / (np.tan(np.pi / n) * np.tan(alpha / 2)))
    T = np.array([[np.cosh(r_in), np.sinh(r_in)], [np.sinh(r_in), np.cosh(r_in)]], dtype=complex)
    Kinv = np.linalg.inv(_CAYLEY)
    gens = []
    for k in range(n // 2):
        th = 2 * np.pi * k / n
        R = np.diag([np.exp(0.5j * th), np.exp(-0.5j * th)])
        g = _CAYLEY @ R @ T @ np.linalg.inv(R) @ Kinv
        g = g / np.sqrt(np.linalg.det(g))
        # the conjugate of an SU(1,1) element is real up to a unit scalar
        phase = g[np.unravel_index(np.argmax(np.abs(g)), g.shape)]
        g = g * (abs(phase) / phase)
        if np.max(np.abs(g.imag)) > 1e-10:
            raise StructuralError("generator is not real after conjugation")
        gens.append(MoebiusMap.from_matrix(g.real))
    # generator k maps side k + n/2 onto side k
    pairing = tuple([(k + n // 2, k + 1) for k in range(n // 2)] + [(k, -(k + 1)) for k in range(n // 2)])
    dom = FundamentalDomain(n, float(r_in), float(r_circ), pairing)
    return FuchsianGroup(tuple(gens), dom, 4, name=f"regular-{n}-gon")


def octagon_group() -> FuchsianGroup:
    return regular_polygon_group(2)


def trivial_group() -> FuchsianGroup:
    dom = regular_polygon_group(2).fundamental_domain
    return FuchsianGroup((), dom, 0, name="trivial")


class QuadDifferential:
    """Truncated Poincare series of a disk polynomial seed.

    The seed ``q(w) = sum_k coeffs[k] w^k`` lives on the disk; in the upper
    half-plane each term is ``q(M z) (M'(z))^2`` with ``M = Cayley^{-1} A``.
    """

    def __init__(self, seed, group: FuchsianGroup, cutoff: int):
        self.seed = np.asarray(seed, dtype=complex)
        self.group = group
        self.cutoff = cutoff
        self.residuals: list[float] = []
        mats = group.elements(cutoff).astype(complex)
        Kinv = np.linalg.inv(_CAYLEY)
        M = np.einsum("ij,mjk->mik", Kinv, mats)
        # rescale to determinant one so that M' = 1/(gamma z + delta)^2
        det = M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0]
        self._M = M / np.sqrt(det)[:, None, None]

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        flat = z.ravel()
        out = np.zeros(flat.shape, dtype=complex)
        M = self._M
        chunk = max(1, 2_000_000 // max(1, len(M)))
        for s in range(0, flat.size, chunk):
            zz = flat[s : s + chunk][:, None]
            den = M[None, :, 1, 0] * zz + M[None, :, 1, 1]
            w = (M[None, :, 0, 0] * zz + M[None, :, 0, 1]) / den
            out[s : s + chunk] = np.sum(np.polyval(self.seed[::-1], w) / den**4, axis=1)
        return out.reshape(z.shape)

    def automorphy_residual(self, z) -> float:
        """``sup |phi(Az) A'(z)^2 - phi(z)| / sup |phi(z)|`` over generators."""
        z = np.asarray(z, dtype=complex)
        base = self(z)
        worst = 0.0
        for A in self.group.all_generators():
            Az, dA = apply_moebius(A, z)
            worst = max(worst, float(np.max(np.abs(self(Az) * dA**2 - base))))
        scale = float(np.max(np.abs(base)))
        return worst / scale if scale > 0 else worst

    def config_hash(self) -> str:
        payload = {"seed": [[c.real, c.imag] for c in self.seed], "group": self.group.config_hash(), "cutoff": self.cutoff}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def poincare_series(seed, group: FuchsianGroup, cutoff: int, sample_points=None, check: bool = True) -> QuadDifferential:
    """Build the truncated series and record automorphy residuals.

    With ``check`` the residual is tracked over the last three cutoffs and a
    tail that fails to shrink raises :class:`DivergenceError`.
    """
    qd = QuadDifferential(seed, group, cutoff)
    if not group.generators:
        qd.residuals = [0.0]
        return qd
    if sample_points is None:
        sample_points = group.fundamental_domain.random_points(12, np.random.default_rng(0))
    levels = [c for c in (cutoff - 2, cutoff - 1, cutoff) if c >= 0] if check else [cutoff]
    res = [QuadDifferential(seed, group, c).automorphy_residual(sample_points) for c in levels[:-1]]
    res.append(qd.automorphy_residual(sample_points))
    qd.residuals = res
    if check and len(res) == 3 and not res[-1] < res[0]:
        raise DivergenceError(f"automorphy residual not decreasing over cutoffs {levels}: {res}")
    return qd


class RQVector:
    """``Re(phi dz^2)`` for a holomorphic ``phi`` on the upper half-plane."""

    def __init__(self, phi, group: FuchsianGroup | None = None, label: str = "v"):
        self._phi = phi
        self.group = group
        self.label = label

    @classmethod
    def from_quad(cls, qd: QuadDifferential, scale: complex = 1.0) -> "RQVector":
        if scale == 1.0:
            return cls(qd, qd.group, f"q{qd.config_hash()[:6]}")
        return cls(lambda z: scale * qd(z), qd.group, f"{scale}*q{qd.config_hash()[:6]}")

    def phi(self, z, model: str = "uhp"):
        if model == "disk":
            zz, dz = disk_to_uhp(z)
            return self._phi(zz) * dz**2
        return self._phi(z)

    def tensor(self, z, rho=None, model: str = "uhp") -> MetricField:
        z = np.asarray(z, dtype=complex)
        if rho is None:
            rho = hyperbolic_density(model, z)
        return MetricField.real_part(z, self.phi(z, model), rho)

    def _check(self, other):
        if self.group is not None and other.group is not None and self.group.config_hash() != other.group.config_hash():
            raise StructuralError("RQ vectors over different groups")

    def __add__(self, other: "RQVector") -> "RQVector":
        self._check(other)
        return RQVector(lambda z: self.phi(z) + other.phi(z), self.group or other.group, f"({self.label}+{other.label})")

    def __sub__(self, other: "RQVector") -> "RQVector":
        return self + (-other)

    def __mul__(self, s: float) -> "RQVector":
        return RQVector(lambda z: s * self.phi(z), self.group, f"{s}*{self.label}")

    __rmul__ = __mul__

    def __neg__(self) -> "RQVector":
        return self * -1.0


def zero_vector(group=None) -> RQVector:
    return RQVector(lambda z: np.zeros(np.shape(z), dtype=complex), group, "0")


@dataclass
class Quadrature:
    """Nodes/weights (for ``dx dy``) over a region of the upper half-plane."""

    z: np.ndarray
    w: np.ndarray
    model: str = "uhp"
    rho: np.ndarray = field(init=False)

    def __post_init__(self):
        self.rho = hyperbolic_density(self.model, self.z)

    @classmethod
    def fundamental_domain(cls, group: FuchsianGroup, order: int = 16, subdivisions: int = 2, model: str = "uhp") -> "Quadrature":
        return cls(*group.fundamental_domain.quadrature(order, subdivisions, model), model)

    @classmethod
    def hyperbolic_ball(cls, radius: float, order: int = 16) -> "Quadrature":
        """Ball of hyperbolic ``radius`` about ``i``."""
        x, wx = np.polynomial.legendre.leggauss(order)
        R = np.tanh(radius / 2)
        r = R * (x + 1) / 2
        wr = R * wx / 2
        m = 2 * order
        th = 2 * np.pi * np.arange(m) / m
        wpol = np.outer(np.full(m, 2 * np.pi / m), wr * r)
        w = (r[None, :] * np.exp(1j * th[:, None])).ravel()
        z, dz = disk_to_uhp(w)
        return cls(z, wpol.ravel() * np.abs(dz) ** 2)

    def hyperbolic_area(self) -> float:
        return float(np.sum(self.w * self.rho))


def rq_inner_product(v: RQVector, w: RQVector, quad: Quadrature) -> float:
    """``int_R <v, w> da`` with the hyperbolic metric."""
    v._check(w)
    tv = v.tensor(quad.z, quad.rho, quad.model)
    tw = w.tensor(quad.z, quad.rho, quad.model)
    return float(np.sum(pointwise_inner(tv, tw) * quad.rho * quad.w))


def monte_carlo_inner_product(v: RQVector, w: RQVector, group: FuchsianGroup, n: int, rng) -> tuple[float, float]:
    """Monte Carlo estimate of :func:`rq_inner_product` with its standard error."""
    v._check(w)
    chunk = 200_000
    vals = []
    for s in range(0, n, chunk):
        m = min(chunk, n - s)
        z, wt, inside = group.fundamental_domain.monte_carlo(m, rng)
        g = np.zeros(m)
        zi = z[inside]
        rho = hyperbolic_density("uhp", zi)
        g[inside] = pointwise_inner(v.tensor(zi, rho), w.tensor(zi, rho)) * rho * wt[inside] * n
        vals.append(g)
    total = np.concatenate(vals)
    return float(total.mean()), float(total.std(ddof=1) / np.sqrt(n))


def rq_basis(group: FuchsianGroup, size: int, cutoff: int = 2) -> list[RQVector]:
    """``size`` test vectors: monomial seeds ``w^k`` and ``i w^k`` in turn."""
    if size < 1:
        raise StructuralError("basis size must be positive")
    out = []
    k = 0
    while len(out) < size:
        seed = np.zeros(k + 1, dtype=complex)
        seed[k] = 1.0
        qd = poincare_series(seed, group, cutoff, check=False)
        v = RQVector.from_quad(qd)
        v.label = f"w^{k}"
        out.append(v)
        if len(out) < size:
            vi = RQVector.from_quad(qd, 1j)
            vi.label = f"i*w^{k}"
            out.append(vi)
        k += 1
    return out
