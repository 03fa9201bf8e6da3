"""First and second variations of renormalized volume at the Fuchsian point,
measured by finite differences through the quasiconformal solver."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .beltrami import MU_CAP, BeltramiField, QCMap, StepSizeError, reflect_uhp, solve_beltrami
from .corrected import acylindrical_hessian  # noqa: F401  (part of this module's interface)
from .fuchsian import Quadrature, RQVector, StructuralError, zero_vector
from .grid import Grid
from .infinity import schwarzian
from .tensors import MetricField, integrate_inner

log = logging.getLogger(__name__)


@dataclass
class TangentPair:
    plus: RQVector
    minus: RQVector

    def __post_init__(self):
        self.plus._check(self.minus)

    @classmethod
    def one_sided(cls, v: RQVector) -> "TangentPair":
        return cls(v, zero_vector(v.group))

    @classmethod
    def diagonal(cls, v: RQVector) -> "TangentPair":
        return cls(v, v)

    @classmethod
    def antidiagonal(cls, v: RQVector) -> "TangentPair":
        return cls(v, -v)

    def swapped(self) -> "TangentPair":
        return TangentPair(self.minus, self.plus)

    @property
    def label(self) -> str:
        return f"({self.plus.label},{self.minus.label})"


def vr_first_variation(v, ii0: MetricField, quad: Quadrature) -> float:
    """``-1/4 <<v, II_0>>`` over the quadrature region."""
    tv = v.tensor(quad.z, quad.rho, quad.model) if isinstance(v, RQVector) else v
    return -0.25 * integrate_inner(tv, ii0, quad.w)


@dataclass
class LabConfig:
    n: int = 512
    half_width: float = 16.0
    core_radius: float = 1.0
    quad_order: int = 16
    amplitudes: tuple = (0.02, 0.01, 0.005)
    cap: float = MU_CAP
    circle_radius: float = 0.15
    circle_nodes: int = 32
    tol: float = 1e-12
    supersample: int = 4

    def as_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


@dataclass
class LinearResponse:
    direction: TangentPair
    plus: MetricField
    minus: MetricField
    amplitudes: tuple
    table: list = field(default_factory=list)

    def end(self, sign: str) -> MetricField:
        return self.plus if sign == "+" else self.minus


class HessianLab:
    """Quasi-Fuchsian II_0 pipeline on a square grid in the plane.

    For a pair ``(v+, v-)`` the top coefficient lives on the upper half-plane
    and the bottom one is reflected below.  The + end is uniformised by the
    symmetric solution ``w+`` of the top coefficient; ``II_0+`` is minus the
    real part of the Schwarzian of ``f o w+^{-1}`` evaluated on a hyperbolic
    ball about ``i``.  The - end is the same construction after reflection.
    """

    def __init__(self, config: LabConfig | None = None):
        self.config = config or LabConfig()
        c = self.config
        self.grid = Grid.square(c.n, c.half_width)
        self.quad = Quadrature.hyperbolic_ball(c.core_radius, c.quad_order)
        self._mu_cache: dict = {}

    def beltrami(self, v: RQVector) -> np.ndarray:
        """``conj(phi) / (2 rho)`` on the upper half of the grid, zero below."""
        key = id(v)
        if key not in self._mu_cache:
            def fn(z):
                out = np.zeros(z.shape, dtype=complex)
                up = z.imag > 0
                out[up] = 0.5 * z.imag[up] ** 2 * np.conj(v.phi(z[up]))
                return out

            self._mu_cache[key] = (v, self.grid.sample(fn, self.config.supersample))
        return self._mu_cache[key][1]

    def mu_norm(self, pair: TangentPair) -> float:
        return max(float(np.max(np.abs(self.beltrami(pair.plus)))), float(np.max(np.abs(self.beltrami(pair.minus)))))

    def _solve(self, mu: np.ndarray) -> QCMap | None:
        if not np.any(mu):
            return None
        return solve_beltrami(BeltramiField(self.grid, mu), tol=self.config.tol, cap=self.config.cap)

    def _ii0(self, f, w: QCMap | None) -> MetricField:
        q = self.quad
        r = np.minimum(self.config.circle_radius, 0.5 * q.z.imag)
        if w is None:
            G = f
        else:
            G = lambda z: f(w.inverse(z))  # noqa: E731
        sf = schwarzian(G, q.z, method="cauchy", radius=r, nodes=self.config.circle_nodes)
        return MetricField.real_part(q.z, -sf.S, q.rho)

    def qf_ii0_pair(self, pair: TangentPair, t: float) -> tuple[MetricField, MetricField]:
        """``(II_0+, II_0-)`` of the quasi-Fuchsian group at amplitude ``t``."""
        q = self.quad
        zero = MetricField(q.z, 0.0, 0.0, q.rho)
        if t == 0:
            return zero, zero
        mp = t * self.beltrami(pair.plus)
        mm = t * self.beltrami(pair.minus)
        sup = max(np.max(np.abs(mp)), np.max(np.abs(mm)))
        if sup >= self.config.cap:
            raise StepSizeError(f"amplitude {t} gives |mu| = {sup:.4g} above the solver cap")
        g = self.grid
        wp = self._solve(reflect_uhp(BeltramiField(g, mp)).samples)
        if np.array_equal(mp, mm):
            return zero, zero
        wm = self._solve(reflect_uhp(BeltramiField(g, mm)).samples)
        f = self._solve(reflect_uhp(BeltramiField(g, mp), lower=BeltramiField(g, mm)).samples)
        f_plus = f if f is not None else QCMap.identity()
        # the - end sees the reflected map
        f_minus = QCMap(lambda z: np.conj(f_plus(np.conj(z))), None, None)
        plus = self._ii0(f_plus, wp)
        minus = self._ii0(f_minus, wm)
        return plus, minus

    def qf_ii0(self, pair: TangentPair, t: float, end: str = "+") -> MetricField:
        p, m = self.qf_ii0_pair(pair, t)
        return p if end == "+" else m

    def amplitudes(self, pair: TangentPair) -> tuple:
        norm = self.mu_norm(pair)
        if norm == 0:
            return tuple(self.config.amplitudes)
        return tuple(a * self.config.cap / norm for a in self.config.amplitudes)

    def dii0_linear_response(self, pair: TangentPair) -> LinearResponse:
        """Central differences in ``t`` with an order-2 Richardson table."""
        ts = self.amplitudes(pair)
        diffs = []
        for t in ts:
            pp, pm = self.qf_ii0_pair(pair, t)
            mp, mm = self.qf_ii0_pair(pair, -t)
            diffs.append(((pp - mp) * (0.5 / t), (pm - mm) * (0.5 / t)))
        rows = [diffs]
        for k in range(1, len(diffs)):
            prev = rows[-1]
            c = 4.0**k
            rows.append([((b[0] * c - a[0]) * (1 / (c - 1)), (b[1] * c - a[1]) * (1 / (c - 1))) for a, b in zip(prev, prev[1:])])
        table = [[self.norm(x[0]) + self.norm(x[1]) for x in row] for row in rows]
        changes = [self.norm(diffs[i][0] - diffs[i + 1][0]) + self.norm(diffs[i][1] - diffs[i + 1][1]) for i in range(len(diffs) - 1)]
        floor = 1e-8 * max(table[0][-1], 1e-300) + 1e-12
        for a, b in zip(changes, changes[1:]):
            if b > a and b > floor:
                raise StepSizeError(f"Richardson table not converging: {changes}")
        best = rows[-1][0]
        return LinearResponse(pair, best[0], best[1], ts, table)

    def inner(self, s: MetricField, t: MetricField) -> float:
        return integrate_inner(s, t, self.quad.w)

    def norm(self, s: MetricField) -> float:
        return float(np.sqrt(max(self.inner(s, s), 0.0)))

    def tensor(self, v: RQVector) -> MetricField:
        return v.tensor(self.quad.z, self.quad.rho)

    def relative_error(self, measured: MetricField, target: MetricField) -> float:
        """Relative L^2 error; the zero target is measured against ``scale``."""
        return self.norm(measured - target) / self.norm(target)

    def project(self, field: MetricField, basis) -> tuple[np.ndarray, float]:
        """Least-squares RQ coefficients and the relative residual."""
        T = [self.tensor(b) for b in basis]
        G = np.array([[self.inner(a, b) for b in T] for a in T])
        rhs = np.array([self.inner(a, field) for a in T])
        c = np.linalg.lstsq(G, rhs, rcond=1e-12)[0]
        fit = field * 0.0
        for ci, ti in zip(c, T):
            fit = fit + ti * ci
        nf = self.norm(field)
        return c, (self.norm(field - fit) / nf if nf > 0 else 0.0)

    def vr_hessian_fd(self, v: TangentPair, response: LinearResponse) -> float:
        """``-1/4 (<<v+, D II_0+(w)>> + <<v-, D II_0-(w)>>)``."""
        return -0.25 * (self.inner(self.tensor(v.plus), response.plus) + self.inner(self.tensor(v.minus), response.minus))


def lemma_targets(lab: HessianLab, pair: TangentPair) -> tuple[MetricField, MetricField]:
    """Predicted ``D II_0`` at the Fuchsian point: ``-1/4 (v+ - v-)`` and its mirror."""
    d = lab.tensor(pair.plus) - lab.tensor(pair.minus)
    return d * -0.25, d * 0.25


def check_basis_size(k: int):
    if k < 1:
        raise StructuralError("basis size must be positive")
