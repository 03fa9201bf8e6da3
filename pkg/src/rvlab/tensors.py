"""Symmetric real 2-tensors written in a conformal coordinate.

A tensor is stored as ``a dz^2 + conj(a) dzbar^2 + e dz dzbar`` with ``a``
complex and ``e`` real, sampled at points ``z``.  Inner products are taken
against the conformal metric ``rho |dz|^2`` given at the same points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MetricField:
    z: np.ndarray
    a: np.ndarray
    e: np.ndarray
    rho: np.ndarray = field(repr=False)

    def __post_init__(self):
        z = np.asarray(self.z, dtype=complex)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "a", np.broadcast_to(np.asarray(self.a, dtype=complex), z.shape).copy())
        e = np.asarray(self.e)
        if np.iscomplexobj(e):
            if np.max(np.abs(e.imag), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(e), initial=0.0)):
                raise ValueError("dz dzbar coefficient must be real")
            e = e.real
        object.__setattr__(self, "e", np.broadcast_to(e.astype(float), z.shape).copy())
        object.__setattr__(self, "rho", np.broadcast_to(np.asarray(self.rho, dtype=float), z.shape).copy())

    @classmethod
    def conformal(cls, z, rho, scale=1.0) -> "MetricField":
        """``scale * rho dz dzbar``."""
        rho = np.asarray(rho, dtype=float)
        return cls(z, 0.0, scale * rho, rho)

    @classmethod
    def real_part(cls, z, phi, rho) -> "MetricField":
        """``Re(phi dz^2)``."""
        return cls(z, 0.5 * np.asarray(phi), 0.0, rho)

    def __add__(self, other: "MetricField") -> "MetricField":
        return MetricField(self.z, self.a + other.a, self.e + other.e, self.rho)

    def __sub__(self, other: "MetricField") -> "MetricField":
        return MetricField(self.z, self.a - other.a, self.e - other.e, self.rho)

    def __mul__(self, s: float) -> "MetricField":
        return MetricField(self.z, s * self.a, s * self.e, self.rho)

    __rmul__ = __mul__

    def __neg__(self) -> "MetricField":
        return self * -1.0

    def traceless_part(self) -> "MetricField":
        return MetricField(self.z, self.a, 0.0, self.rho)

    def trace_part(self) -> "MetricField":
        return MetricField(self.z, 0.0, self.e, self.rho)

    def trace(self) -> np.ndarray:
        return 2.0 * self.e / self.rho

    def matrix(self) -> np.ndarray:
        """Real coordinate components ``T[..., i, j]`` in ``(dx, dy)``."""
        al, be = self.a.real, self.a.imag
        T = np.empty(self.z.shape + (2, 2))
        T[..., 0, 0] = 2 * al + self.e
        T[..., 1, 1] = -2 * al + self.e
        T[..., 0, 1] = T[..., 1, 0] = -2 * be
        return T

    @classmethod
    def from_matrix(cls, z, T, rho) -> "MetricField":
        e = 0.5 * (T[..., 0, 0] + T[..., 1, 1])
        al = 0.25 * (T[..., 0, 0] - T[..., 1, 1])
        be = -0.25 * (T[..., 0, 1] + T[..., 1, 0])
        return cls(z, al + 1j * be, e, rho)

    def is_positive_definite(self) -> np.ndarray:
        # eigenvalues of the coordinate matrix are e +- 2|a|
        return self.e > 2 * np.abs(self.a)


def pointwise_inner(s: MetricField, t: MetricField) -> np.ndarray:
    """``g^{ik} g^{jl} S_ij T_kl`` for ``g = rho |dz|^2``."""
    return (8.0 * np.real(s.a * np.conj(t.a)) + 2.0 * s.e * t.e) / s.rho**2


def integrate_inner(s: MetricField, t: MetricField, weights) -> float:
    """``int <s, t> da`` with ``da = rho dx dy`` and flat quadrature ``weights``."""
    return float(np.sum(pointwise_inner(s, t) * s.rho * weights))
