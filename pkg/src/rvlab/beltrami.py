"""Beltrami coefficients, the quasiconformal solver and pulled-back metrics.

The solver is the classical Neumann series: ``f = z + C h`` with
``h = mu (1 + B h)``, where ``C`` and ``B`` are the Cauchy and Beurling
transforms discretised with exact cell kernels on a zero-padded FFT grid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .fuchsian import DomainError, apply_moebius, hyperbolic_density
from .grid import Grid, cauchy_at, convolver
from .tensors import MetricField

log = logging.getLogger(__name__)

MU_CAP = 0.9


class BeltramiNormError(ValueError):
    def __init__(self, sup: float, where: complex, limit: float):
        super().__init__(f"|mu| = {sup:.6g} >= {limit} at z = {where:.6g}")
        self.sup = sup
        self.where = where


class SolverError(RuntimeError):
    pass


class ExtrapolationError(ValueError):
    pass


class StepSizeError(RuntimeError):
    pass


@dataclass(frozen=True)
class BeltramiField:
    grid: Grid
    samples: np.ndarray
    sup_norm: float = field(init=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.shape != (self.grid.n, self.grid.n):
            raise ValueError("samples do not match grid")
        if not np.all(np.isfinite(s)):
            raise ValueError("Beltrami samples must be finite")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sup_norm", float(np.max(np.abs(s), initial=0.0)))

    @classmethod
    def from_function(cls, fn, grid: Grid, supersample: int = 1) -> "BeltramiField":
        return cls(grid, grid.sample(fn, supersample))

    def argmax(self) -> complex:
        idx = np.unravel_index(np.argmax(np.abs(self.samples)), self.samples.shape)
        return complex(self.grid.points()[idx])

    def check(self, limit: float = 1.0) -> "BeltramiField":
        if self.sup_norm >= limit:
            raise BeltramiNormError(self.sup_norm, self.argmax(), limit)
        return self

    def __mul__(self, t: float) -> "BeltramiField":
        return BeltramiField(self.grid, t * self.samples)

    __rmul__ = __mul__

    def __add__(self, other: "BeltramiField") -> "BeltramiField":
        if other.grid != self.grid:
            raise ValueError("grid mismatch")
        return BeltramiField(self.grid, self.samples + other.samples)


def _density(rho):
    if callable(rho):
        return rho
    if isinstance(rho, str):
        return lambda z: hyperbolic_density(rho, z)
    return lambda z: np.full(np.shape(z), float(rho))


def _inside(model, z):
    if model in ("uhp", "upper-half-plane"):
        return z.imag > 0
    if model == "disk":
        return np.abs(z) < 1
    return np.ones(np.shape(z), dtype=bool)


def beltrami_coefficient(phi, rho, z) -> np.ndarray:
    """Pointwise ``conj(phi(z)) / (2 rho(z))``."""
    z = np.asarray(z, dtype=complex)
    return np.conj(phi(z)) / (2.0 * _density(rho)(z))


def equivariance_residual(phi, rho, maps, z) -> float:
    """``max |mu(A z) conj(A'(z)) - mu(z) A'(z)| / max |mu|`` over maps and points."""
    z = np.asarray(z, dtype=complex)
    mu = beltrami_coefficient(phi, rho, z)
    worst = 0.0
    for A in maps:
        Az, dA = apply_moebius(A, z)
        worst = max(worst, float(np.max(np.abs(beltrami_coefficient(phi, rho, Az) * np.conj(dA) - mu * dA))))
    scale = float(np.max(np.abs(mu)))
    return worst / scale if scale > 0 else worst


def mu_from_phi(phi, rho, grid: Grid, region=None, supersample: int = 1) -> BeltramiField:
    """``mu = conj(phi) / (2 rho)`` on the grid, zero outside ``region``.

    ``rho`` is a model name, a callable density or a constant.  ``region``
    is a boolean predicate; by default the model domain.
    """
    dens = _density(rho)
    if region is None:
        region = (lambda z: _inside(rho, z)) if isinstance(rho, str) else (lambda z: np.ones(np.shape(z), bool))

    def fn(z):
        inside = region(z)
        out = np.zeros(np.shape(z), dtype=complex)
        out[inside] = beltrami_coefficient(phi, dens, z[inside])
        return out

    return BeltramiField.from_function(fn, grid, supersample).check(1.0)


def reflect_uhp(mu: BeltramiField, lower=None) -> BeltramiField:
    """Extend ``mu`` from the upper half-plane by ``conj(mu(conj z))``.

    ``lower`` replaces the reflected part when given (another field whose
    upper half-plane values are reflected instead).
    """
    g = mu.grid
    if not np.isclose(g.y0 + g.n * g.dx / 2, 0.0):
        raise ValueError("reflection needs a grid symmetric about the real axis")
    src = mu.samples if lower is None else lower.samples
    Y = g.points().imag
    out = np.where(Y > 0, mu.samples, np.conj(src[::-1, :]))
    return BeltramiField(g, out)


class QCMap:
    """A quasiconformal map given by callables ``f``, ``f_z``, ``f_zbar``.

    Grid solutions interpolate bicubically; analytic maps wrap closures.
    """

    def __init__(self, f, fz, fzbar, grid: Grid | None = None, info: dict | None = None):
        self._f = f
        self._fz = fz
        self._fzbar = fzbar
        self.grid = grid
        self.info = info or {}

    @classmethod
    def from_functions(cls, f, fz, fzbar=None) -> "QCMap":
        if fzbar is None:
            fzbar = lambda z: np.zeros(np.shape(z), dtype=complex)
        return cls(f, fz, fzbar, None, {"kind": "analytic"})

    @classmethod
    def identity(cls) -> "QCMap":
        return cls.from_functions(lambda z: np.asarray(z, dtype=complex), lambda z: np.ones(np.shape(z), dtype=complex))

    def _guard(self, z):
        z = np.asarray(z, dtype=complex)
        if self.grid is not None and not np.all(self.grid.contains(z)):
            raise ExtrapolationError("evaluation point outside the sampled grid")
        return z

    def __call__(self, z):
        return self._f(self._guard(z))

    def derivatives(self, z):
        z = self._guard(z)
        return self._fz(z), self._fzbar(z)

    def beltrami(self, z):
        fz, fzb = self.derivatives(z)
        return fzb / fz

    def inverse(self, zeta, tol: float = 1e-13, maxit: int = 50):
        """Newton inversion of the real 2-d system ``f(z) = zeta``."""
        zeta = np.asarray(zeta, dtype=complex)
        z = zeta.copy()
        r = zeta - self(z)
        for _ in range(maxit):
            if np.max(np.abs(r), initial=0.0) < tol:
                break
            a, b = self.derivatives(z)
            step = (np.conj(a) * r - b * np.conj(r)) / (np.abs(a) ** 2 - np.abs(b) ** 2)
            # damped Newton: halve the step wherever the residual would grow
            lam = np.ones(z.shape)
            for _ in range(30):
                trial = z + lam * step
                ok = self.grid.contains(trial) if self.grid is not None else np.ones(z.shape, bool)
                rt = np.where(ok, zeta - self._f(np.where(ok, trial, z)), np.inf)
                bad = np.abs(rt) > np.abs(r) * (1 - 1e-4 * lam) + tol
                if not np.any(bad):
                    break
                lam = np.where(bad, lam / 2, lam)
            z, r = trial, rt
        else:
            raise SolverError("inverse map did not converge")
        return z


def _spline(grid: Grid, values: np.ndarray):
    xs, ys = grid.xs, grid.ys
    sr = RectBivariateSpline(xs, ys, values.real.T)
    si = RectBivariateSpline(xs, ys, values.imag.T)

    def ev(z):
        z = np.asarray(z, dtype=complex)
        return (sr.ev(z.real, z.imag) + 1j * si.ev(z.real, z.imag)).reshape(z.shape)

    return ev


def _neumann(mu: np.ndarray, n: int, tol: float, maxit: int):
    conv = convolver(n)
    h = mu.copy()
    prev = np.inf
    for it in range(1, maxit + 1):
        bh = conv.beurling(h)
        hn = mu * (1.0 + bh)
        diff = float(np.max(np.abs(hn - h)))
        h = hn
        if diff < tol:
            break
        if it > 5 and diff > prev * 1.5:
            raise SolverError(f"Neumann series diverging (|mu|_inf = {np.max(np.abs(mu)):.4g})")
        prev = diff
    else:
        raise SolverError(f"no convergence in {maxit} iterations (|mu|_inf = {np.max(np.abs(mu)):.4g})")
    bh = conv.beurling(h)
    return h, bh, it


def _principal(mu: BeltramiField, tol: float, maxit: int):
    g = mu.grid
    h, bh, it = _neumann(mu.samples, g.n, tol, maxit)
    f = g.points() + convolver(g.n).cauchy(h, g.dx)
    resid = h - mu.samples * (1.0 + bh)
    l2 = float(np.sqrt(np.sum(np.abs(resid) ** 2)) * g.dx)
    f0, f1 = np.array([0.0, 1.0]) + cauchy_at(h, g, [0.0, 1.0])
    return f, 1.0 + bh, h, f0, f1, it, l2


def solve_beltrami(
    mu: BeltramiField,
    tol: float = 1e-12,
    maxit: int = 400,
    cap: float = MU_CAP,
    extrapolate: bool = False,
    normalize: bool = True,
) -> QCMap:
    """Solve ``f_zbar = mu f_z``; normalised to fix 0, 1 and infinity.

    ``extrapolate`` combines the solution with one on the half-resolution
    grid (``2 f_h - f_2h``), cancelling the first-order error caused by
    jumps in ``mu``.
    """
    if mu.sup_norm >= 1.0 or mu.sup_norm > cap:
        raise BeltramiNormError(mu.sup_norm, mu.argmax(), min(1.0, cap))
    g = mu.grid
    f, fz, fzb, f0, f1, it, l2 = _principal(mu, tol, maxit)
    info = {"iterations": it, "residual_l2": l2, "sup_norm": mu.sup_norm, "grid": g.as_dict(), "extrapolated": False}
    if extrapolate:
        gc = g.coarsen()
        coarse = BeltramiField(gc, mu.samples.reshape(gc.n, 2, gc.n, 2).mean(axis=(1, 3)))
        fc, _, _, f0c, f1c, _, _ = _principal(coarse, tol, maxit)
        f = 2 * f - _spline(gc, fc)(g.points())
        f0, f1 = 2 * f0 - f0c, 2 * f1 - f1c
        info["extrapolated"] = True
    if normalize:
        scale = f1 - f0
    else:
        f0, scale = 0.0, 1.0
    f = (f - f0) / scale
    fz = fz / scale
    fzb = fzb / scale
    info.update({"normalization": {"f0": complex(f0), "scale": complex(scale)}})
    if np.any(np.abs(fzb) >= np.abs(fz)):
        raise SolverError("solution is not orientation preserving")
    log.debug("beltrami solve: %s", info)
    qc = QCMap(_spline(g, f), _spline(g, fz), _spline(g, fzb), g, info)
    qc.samples = f
    qc.fz_samples = fz
    qc.fzbar_samples = fzb
    return qc


def cauchy_first_order(mu: BeltramiField) -> np.ndarray:
    """The linearisation ``L(mu) = C mu`` of the principal solution."""
    g = mu.grid
    return convolver(g.n).cauchy(mu.samples, g.dx)


def pullback_metric(f: QCMap, rho, z, model: str | None = None) -> MetricField:
    """``f^*(rho dz dzbar) = rho(f) |f_z|^2 |dz + nu dzbar|^2`` at points ``z``."""
    z = np.asarray(z, dtype=complex)
    dens = _density(rho)
    w = f(z)
    if isinstance(rho, str) and not np.all(_inside(rho, w)):
        raise DomainError("map leaves the model domain")
    fz, fzb = f.derivatives(z)
    if np.any(np.abs(fzb) >= np.abs(fz)):
        raise DomainError("map is not orientation preserving at the sample points")
    nu = fzb / fz
    amp = dens(w) * np.abs(fz) ** 2
    return MetricField(z, amp * np.conj(nu), amp * (1.0 + np.abs(nu) ** 2), dens(z))


@dataclass
class MetricVariation:
    field: MetricField
    steps: tuple
    table: list
    extrapolated_change: float

    @property
    def remainder(self) -> MetricField:
        """The ``dz dzbar`` part ``E``."""
        return self.field.trace_part()


def metric_variation(
    phi,
    z,
    grid: Grid,
    model: str = "disk",
    steps=(1e-2, 5e-3, 2.5e-3),
    region=None,
    tol: float = 1e-12,
) -> MetricVariation:
    """``d/dt|0`` of the pulled-back metric along ``mu = t conj(phi)/(2 rho)``.

    Central differences at each step are Richardson-extrapolated (order 2).
    """
    z = np.asarray(z, dtype=complex)
    mu = mu_from_phi(phi, model, grid, region)
    rho_z = hyperbolic_density(model, z)
    if mu.sup_norm == 0.0:
        zero = MetricField(z, 0.0, 0.0, rho_z)
        return MetricVariation(zero, tuple(steps), [], 0.0)
    diffs = []
    for t in steps:
        if t * mu.sup_norm > MU_CAP:
            raise StepSizeError(f"step {t} exceeds the solver cap")
        plus = pullback_metric(solve_beltrami(mu * t, tol=tol), model, z)
        minus = pullback_metric(solve_beltrami(mu * -t, tol=tol), model, z)
        diffs.append((plus - minus) * (0.5 / t))
    table = [diffs]
    for k in range(1, len(diffs)):
        prev = table[-1]
        table.append([(prev[i + 1] * (4.0**k) - prev[i]) * (1.0 / (4.0**k - 1)) for i in range(len(prev) - 1)])
    changes = [_field_norm(diffs[i] - diffs[i + 1]) for i in range(len(diffs) - 1)]
    scale = _field_norm(diffs[-1])
    noise = 1e-9 * max(scale, 1e-300)
    for a, b in zip(changes, changes[1:]):
        if b > a and b > noise:
            raise StepSizeError(f"Richardson table not monotone: {changes}")
    best = table[-1][0]
    return MetricVariation(best, tuple(steps), [[_field_norm(x) for x in row] for row in table], changes[-1] if changes else 0.0)


def _field_norm(m: MetricField) -> float:
    return float(np.sqrt(np.sum(np.abs(m.a) ** 2 + m.e**2)))
