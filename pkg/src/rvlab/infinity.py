"""Schwarzian derivatives and the tensors at infinity of a conformal metric."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fuchsian import RQVector, Quadrature
from .tensors import MetricField, integrate_inner, pointwise_inner


class CriticalPointError(ValueError):
    def __init__(self, where: complex):
        super().__init__(f"derivative vanishes near z = {where:.6g}")
        self.where = where


class MetricError(ValueError):
    pass


@dataclass
class SchwarzianField:
    z: np.ndarray
    S: np.ndarray
    error: np.ndarray
    method: str
    order: int

    def tensor(self, rho=None) -> MetricField:
        """``Re(S dz^2)``."""
        if rho is None:
            rho = np.ones(self.z.shape)
        return MetricField.real_part(self.z, self.S, rho)


def _derivs_stencil(f, z, h):
    fm2, fm1, f0, fp1, fp2 = (f(z + k * h) for k in (-2, -1, 0, 1, 2))
    d1 = (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * h)
    d2 = (-fm2 + 16 * fm1 - 30 * f0 + 16 * fp1 - fp2) / (12 * h * h)
    d3 = (-fm2 + 2 * fm1 - 2 * fp1 + fp2) / (2 * h**3)
    return d1, d2, d3


def _derivs_cauchy(f, z, r, m):
    th = np.exp(2j * np.pi * np.arange(m) / m)
    vals = f(z[..., None] + r[..., None] * th)
    c = np.fft.fft(vals, axis=-1) / m
    return c[..., 1] / r, 2 * c[..., 2] / r**2, 6 * c[..., 3] / r**3


def _combine(d1, d2, d3, z, crit):
    small = np.abs(d1) <= crit
    if np.any(small):
        raise CriticalPointError(complex(z[small].ravel()[0]))
    return d3 / d1 - 1.5 * (d2 / d1) ** 2


def schwarzian(f, z, method: str = "cauchy", h: float = 1e-2, radius: float = 0.15, nodes: int = 32, crit: float = 1e-10) -> SchwarzianField:
    """``S(f) = (f''/f')' - (f''/f')^2 / 2`` for holomorphic ``f`` at points ``z``.

    ``stencil`` uses 5-point real-axis differences at ``h`` and ``2h``,
    Richardson-combined to fourth order; ``cauchy`` uses the trapezoid rule on circles of ``radius``
    (scalar or per point).  The error estimate compares against the rule at
    half resolution.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if method == "stencil":
        d = _derivs_stencil(f, z, h)
        dc = _derivs_stencil(f, z, 2 * h)
        order = 2  # raised to 4 by the Richardson step below
    elif method == "cauchy":
        r = np.broadcast_to(np.asarray(radius, dtype=float), z.shape)
        d = _derivs_cauchy(f, z, r, nodes)
        dc = _derivs_cauchy(f, z, r, nodes // 2)
        order = nodes
    else:
        raise ValueError(f"unknown method {method!r}")
    S = _combine(*d, z, crit * max(1.0, float(np.max(np.abs(d[0])))))
    Sc = _combine(*dc, z, 0.0) if np.all(np.abs(dc[0]) > 0) else S
    err = np.abs(S - Sc)
    if method == "stencil":
        S = (4 * S - Sc) / 3
        err = err / 3
        order = 4
    return SchwarzianField(z, S, err, method, order)


def ii0_from_uniformizing_map(f, z, rho=None, **kw) -> MetricField:
    """``II_0 = -Re(S(f) dz^2)`` at ``z``."""
    sf = schwarzian(f, z, **kw)
    if rho is None:
        rho = np.ones(sf.z.shape)
    return MetricField.real_part(sf.z, -sf.S, rho)


@dataclass
class InfinityTensors:
    I: MetricField
    II: MetricField
    III: MetricField
    B: np.ndarray
    H: np.ndarray
    II0: MetricField
    K: np.ndarray

    def identity_residuals(self) -> dict:
        """Max deviation in each defining identity (coordinate components)."""
        G = self.I.matrix()
        lhs = self.II.matrix()
        rhs = self.II0.matrix() + 0.5 * self.H[..., None, None] * G
        III = np.einsum("...ki,...kl,...lj->...ij", self.B, G, self.B)
        BII = np.einsum("...ik,...kj->...ij", G, self.B)
        scale = max(1.0, float(np.max(np.abs(G))))
        return {
            "II": float(np.max(np.abs(lhs - rhs))) / scale,
            "III": float(np.max(np.abs(III - self.III.matrix()))) / scale,
            "B": float(np.max(np.abs(BII - lhs))) / scale,
            "H": float(np.max(np.abs(self.H + self.K))),
        }


def gauss_curvature(I: MetricField) -> np.ndarray:
    """``K = -exp(-2 phi) Lap(phi)`` for ``I = exp(2 phi)|dz|^2`` sampled on a grid.

    Boundary samples use one-sided copies of the neighbouring values.
    """
    z = I.z
    if z.ndim != 2 or min(z.shape) < 3:
        raise MetricError("curvature needs a 2-d grid of samples")
    dx = abs(z[0, 1] - z[0, 0])
    if not np.isclose(abs(z[1, 0] - z[0, 0]), dx):
        raise MetricError("curvature needs a square grid")
    phi = 0.5 * np.log(I.e)
    p = np.pad(phi, 1, mode="reflect", reflect_type="odd")
    lap = (p[2:, 1:-1] + p[:-2, 1:-1] + p[1:-1, 2:] + p[1:-1, :-2] - 4 * phi) / dx**2
    return -lap / I.e


def assemble_infinity_tensors(I: MetricField, II0: MetricField, K=None) -> InfinityTensors:
    """``H = -K``, ``II = II_0 + (H/2) I``, ``B = I^{-1} II``, ``III = I(B., B.)``.

    ``K`` is computed from the conformal factor unless given.
    """
    if not np.all(I.is_positive_definite()):
        raise MetricError("I is not positive definite")
    if np.max(np.abs(I.a), initial=0.0) > 1e-12 * np.max(I.e):
        raise MetricError("I must be conformal")
    if np.max(np.abs(II0.e), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(II0.a), initial=0.0)):
        raise MetricError("II0 is not traceless")
    if K is None:
        K = gauss_curvature(I)
    K = np.broadcast_to(np.asarray(K, dtype=float), I.z.shape).copy()
    H = -K
    II = MetricField(I.z, II0.a, 0.5 * H * I.e, I.rho)
    G = I.matrix()
    B = np.linalg.solve(G, II.matrix())
    III = MetricField.from_matrix(I.z, np.einsum("...ki,...kl,...lj->...ij", B, G, B), I.rho)
    return InfinityTensors(I, II, III, B, H, II0, K)


@dataclass
class OrthogonalityReport:
    inner: np.ndarray
    scale: np.ndarray
    tol: float

    @property
    def ratios(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.scale > 0, np.abs(self.inner) / self.scale, 0.0)

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.inner) <= self.tol * self.scale))


def diii_orthogonality_check(v: RQVector, dii0: MetricField, basis, quad: Quadrature, tol: float = 0.05, dI: MetricField | None = None) -> OrthogonalityReport:
    """Inner products of ``D III = D II_0 + D I / 4`` with the test ``basis``.

    ``dI`` defaults to the tangent vector itself, which is the traceless part
    of the metric variation at the Fuchsian point.
    """
    rho = quad.rho
    if dI is None:
        dI = v.tensor(quad.z, rho, quad.model)
    diii = dii0 + dI * 0.25
    tv = v.tensor(quad.z, rho, quad.model)
    nv = np.sqrt(max(integrate_inner(tv, tv, quad.w), 0.0))
    inner, scale = [], []
    for w in basis:
        tw = w.tensor(quad.z, rho, quad.model)
        inner.append(integrate_inner(diii, tw, quad.w))
        scale.append(nv * np.sqrt(integrate_inner(tw, tw, quad.w)))
    return OrthogonalityReport(np.array(inner), np.array(scale), tol)


def pointwise_trace_residual(T: MetricField, I: MetricField) -> float:
    """``max |<T, I>|`` pointwise, divided by ``|I|``."""
    ip = pointwise_inner(T, I)
    return float(np.max(np.abs(ip) / np.sqrt(pointwise_inner(I, I))))
