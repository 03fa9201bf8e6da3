"""Regular complex grids, exact cell kernels for the Cauchy and Beurling
transforms, and the flat binary grid format."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.fft as sfft

MAGIC = b"RVGRID01"


@dataclass(frozen=True)
class Grid:
    """Cell-centred ``n x n`` grid covering ``[x0, x0 + n dx] x [y0, y0 + n dx]``.

    Arrays on the grid are indexed ``[row, col] = [y, x]``.
    """

    n: int
    dx: float
    x0: float
    y0: float

    @classmethod
    def square(cls, n: int, half_width: float, center: complex = 0.0) -> "Grid":
        dx = 2.0 * half_width / n
        return cls(n, dx, center.real - half_width, center.imag - half_width)

    @property
    def xs(self) -> np.ndarray:
        return self.x0 + (np.arange(self.n) + 0.5) * self.dx

    @property
    def ys(self) -> np.ndarray:
        return self.y0 + (np.arange(self.n) + 0.5) * self.dx

    def points(self) -> np.ndarray:
        X, Y = np.meshgrid(self.xs, self.ys)
        return X + 1j * Y

    def coarsen(self) -> "Grid":
        if self.n % 2:
            raise ValueError("grid size must be even to coarsen")
        return Grid(self.n // 2, 2 * self.dx, self.x0, self.y0)

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z)
        x1 = self.x0 + self.n * self.dx
        y1 = self.y0 + self.n * self.dx
        return (z.real >= self.x0) & (z.real <= x1) & (z.imag >= self.y0) & (z.imag <= y1)

    def sample(self, fn, supersample: int = 1) -> np.ndarray:
        """Cell averages of ``fn`` by a ``supersample**2`` midpoint rule."""
        if supersample <= 1:
            return np.asarray(fn(self.points()), dtype=complex)
        off = ((np.arange(supersample) + 0.5) / supersample - 0.5) * self.dx
        Z = self.points()
        acc = np.zeros(Z.shape, dtype=complex)
        for a in off:
            for b in off:
                acc += np.nan_to_num(fn(Z + a + 1j * b))
        return acc / supersample**2

    def as_dict(self) -> dict:
        return {"n": self.n, "dx": self.dx, "x0": self.x0, "y0": self.y0}


def _unit_cell_rule(order: int = 10, sub: int = 4):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-0.5, 0.5, sub + 1)
    p = np.concatenate([0.5 * (b - a) * x + 0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:])])
    q = np.concatenate([0.5 * (b - a) * w for a, b in zip(edges[:-1], edges[1:])])
    SX, SY = np.meshgrid(p, p)
    return (SX + 1j * SY).ravel(), np.outer(q, q).ravel()


@lru_cache(maxsize=4)
def unit_kernels(n: int, near: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Cell-integrated kernels on offsets ``[-(n-1), n-1]^2`` for a unit cell.

    Returns ``(kc, kb)`` with ``kc = (1/pi) int_cell dA/(d - s)`` and
    ``kb = -(1/pi) p.v. int_cell dA/(d - s)^2``.  The Cauchy kernel scales
    with ``dx``; the Beurling kernel is scale free.
    """
    j = np.arange(-(n - 1), n)
    J, K = np.meshgrid(j, j)
    d = (J + 1j * K).astype(complex)
    d[n - 1, n - 1] = 1.0
    # far field: midpoint value plus the leading fourth-order correction
    kc = 1.0 / d - 1.0 / (60.0 * d**5)
    kb = 1.0 / d**2 - 1.0 / (12.0 * d**6)
    s, w = _unit_cell_rule()
    c = n - 1
    m = min(near, n - 1)
    for jj in range(-m, m + 1):
        for kk in range(-m, m + 1):
            if jj == 0 and kk == 0:
                # principal value over a centred square vanishes by symmetry
                kc[c, c] = 0.0
                kb[c, c] = 0.0
                continue
            dd = jj + 1j * kk
            kc[c + kk, c + jj] = np.sum(w / (dd - s))
            kb[c + kk, c + jj] = np.sum(w / (dd - s) ** 2)
    return kc / np.pi, -kb / np.pi


class CellConvolver:
    """Linear (non-periodic) convolution with the cell kernels, via padded FFT."""

    def __init__(self, n: int):
        self.n = n
        kc, kb = unit_kernels(n)
        idx = np.arange(-(n - 1), n) % (2 * n)
        self._fc = self._spectrum(kc, idx)
        self._fb = self._spectrum(kb, idx)

    def _spectrum(self, k, idx):
        a = np.zeros((2 * self.n, 2 * self.n), dtype=complex)
        a[np.ix_(idx, idx)] = k
        return sfft.fft2(a)

    def _apply(self, spec, h):
        n = self.n
        a = np.zeros((2 * n, 2 * n), dtype=complex)
        a[:n, :n] = h
        return sfft.ifft2(sfft.fft2(a) * spec)[:n, :n]

    def cauchy(self, h: np.ndarray, dx: float) -> np.ndarray:
        return dx * self._apply(self._fc, h)

    def beurling(self, h: np.ndarray) -> np.ndarray:
        return self._apply(self._fb, h)


@lru_cache(maxsize=4)
def convolver(n: int) -> CellConvolver:
    return CellConvolver(n)


def cauchy_at(h: np.ndarray, grid: Grid, z, near: float = 4.0) -> np.ndarray:
    """Cauchy transform of piecewise-constant ``h`` at arbitrary points."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    Z = grid.points().ravel()
    hv = h.ravel()
    nz = hv != 0
    Z, hv = Z[nz], hv[nz]
    s, w = _unit_cell_rule(8, 2)
    out = np.empty(z.shape, dtype=complex)
    for i, zi in enumerate(z):
        d = (zi - Z) / grid.dx
        close = np.abs(d) < near
        with np.errstate(divide="ignore", invalid="ignore"):
            k = 1.0 / d - 1.0 / (60.0 * d**5)
        if np.any(close):
            dc = d[close]
            k[close] = np.sum(w[None, :] / (dc[:, None] - s[None, :]), axis=1)
        out[i] = grid.dx * np.sum(hv * k) / np.pi
    return out


def write_grid(path, grid: Grid, samples: np.ndarray, meta: dict | None = None) -> None:
    """Binary grid: magic, header (n, dx, x0, y0), row-major complex128 body.

    A JSON sidecar ``<path>.json`` carries ``meta`` (norms, residuals, hash).
    """
    path = Path(path)
    samples = np.ascontiguousarray(samples, dtype="<c16")
    if samples.shape[-2:] != (grid.n, grid.n):
        raise ValueError("sample shape does not match grid")
    ncomp = 1 if samples.ndim == 2 else samples.shape[0]
    header = np.array([grid.n, ncomp], dtype="<i8").tobytes() + np.array(
        [grid.dx, grid.x0, grid.y0], dtype="<f8"
    ).tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header)
        fh.write(samples.tobytes())
    sidecar = {"schema": 1, "grid": grid.as_dict(), "components": ncomp}
    sidecar.update(meta or {})
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def read_grid(path) -> tuple[Grid, np.ndarray, dict]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a grid file")
    n, ncomp = np.frombuffer(raw[8:24], dtype="<i8")
    dx, x0, y0 = np.frombuffer(raw[24:48], dtype="<f8")
    body = np.frombuffer(raw[48:], dtype="<c16")
    shape = (int(n), int(n)) if ncomp == 1 else (int(ncomp), int(n), int(n))
    if body.size != np.prod(shape):
        raise ValueError(f"{path}: truncated body")
    side = Path(str(path) + ".json")
    meta = json.loads(side.read_text()) if side.exists() else {}
    return Grid(int(n), float(dx), float(x0), float(y0)), body.reshape(shape).copy(), meta
