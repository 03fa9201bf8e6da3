"""Decay of conformal factors in a rank-1 cusp.

The cusp is ``(v, w)`` with ``w`` periodic of period 1/2 and ``v = exp(-s)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

W_PERIOD = 0.5


@dataclass
class CuspProfile:
    """Conformal factor ``psi(v, w)`` sampled on ``s`` (so ``v = e^-s``) and ``w``."""

    name: str
    psi: object
    r_inf: float
    s: np.ndarray
    nw: int = 64
    rate: float | None = None  # closed-form exponential rate of the ansatz, if known

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        if np.any(np.diff(self.s) <= 0):
            raise ValueError("s samples must increase")

    @property
    def v(self) -> np.ndarray:
        return np.exp(-self.s)

    @property
    def w(self) -> np.ndarray:
        return W_PERIOD * np.arange(self.nw) / self.nw

    def samples(self) -> np.ndarray:
        """``psi`` on the ``(s, w)`` grid, shape ``(len(s), nw)``."""
        V, Wg = np.meshgrid(self.v, self.w, indexing="ij")
        return np.asarray(self.psi(V, Wg), dtype=float) * np.ones(V.shape)

    def psi_w(self) -> np.ndarray:
        """Spectral ``w``-derivative of the samples."""
        k = np.fft.fftfreq(self.nw, d=W_PERIOD / self.nw)
        return np.real(np.fft.ifft(2j * np.pi * k * np.fft.fft(self.samples(), axis=1), axis=1))


def standard_profiles(r_inf: float = 0.3, s_max: float = 9.0, n: int = 200) -> list:
    """The three reference families: constant, linear in ``v``, and linear
    plus an infinitely flat ``w``-oscillation."""
    s = np.linspace(1.0, s_max, n)
    return [
        CuspProfile("constant", lambda v, w: r_inf + 0 * v, r_inf, s, rate=None),
        CuspProfile("linear", lambda v, w: r_inf + v, r_inf, s, rate=1.0),
        CuspProfile(
            "flat-oscillation",
            lambda v, w: r_inf + v + np.exp(-1.0 / v) * np.sin(4 * np.pi * w),
            r_inf,
            s,
            rate=1.0,
        ),
    ]


@dataclass
class Fit:
    slope: float
    intercept: float
    r2: float


def _fit(x, y) -> Fit:
    res = stats.linregress(x, y)
    return Fit(float(res.slope), float(res.intercept), float(res.rvalue**2))


@dataclass
class CuspReport:
    name: str
    status: str
    exp_rate: float | None
    power_exponent: float | None
    r2: float | None
    w_term_max: float
    w_term_decays: bool
    w_term_rate: float | None
    window: tuple
    notes: str = ""

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def cusp_decay_report(p: CuspProfile, v_min: float = 1e-3, r2_min: float = 0.95, zero_tol: float = 1e-13) -> CuspReport:
    """Fit the decay of ``a = exp(2 phi) - exp(2 R)`` and of the ``w``-term.

    ``sup_w |a|`` is fitted against ``s`` (exponential rate) and ``log s``
    (power law) over the last decade of ``v``.  The ``w``-term is the cusp
    ``C^1`` size ``e^{2s} |a_w| = v^-2 |2 psi_w e^{2 psi}|``; values that
    underflow to zero count as decayed.
    """
    if p.v.min() > v_min:
        raise ValueError(f"samples stop at v = {p.v.min():.3g}; need v <= {v_min}")
    psi = p.samples()
    a = np.exp(2 * psi) - np.exp(2 * p.r_inf)
    sup_a = np.max(np.abs(a), axis=1)
    win = p.v <= 10 * p.v.min()
    window = (float(p.s[win][0]), float(p.s[win][-1]))

    with np.errstate(over="ignore", invalid="ignore"):
        wterm = np.max(np.abs(2 * p.psi_w() * np.exp(2 * psi)), axis=1) * np.exp(2 * p.s)
    wterm = np.nan_to_num(wterm, nan=np.inf)
    wt = wterm[win]
    tiny = wt <= zero_tol
    if np.all(tiny):
        w_decays, w_rate = True, None
    else:
        nz = ~tiny
        f = _fit(p.s[win][nz], np.log(wt[nz])) if nz.sum() > 2 else None
        w_rate = -f.slope if f else None
        w_decays = bool(wt[-1] <= wt[0] and (w_rate is None or w_rate > 0))

    scale = max(1.0, float(np.exp(2 * p.r_inf)))
    if np.all(sup_a[win] <= zero_tol * scale):
        status = "PASS" if w_decays else "FAIL"
        return CuspReport(p.name, status, None, None, None, float(np.max(wt)), w_decays, w_rate, window, "a vanishes")
    fe = _fit(p.s[win], np.log(sup_a[win]))
    fp = _fit(np.log(p.s[win]), np.log(sup_a[win]))
    if fe.r2 < r2_min:
        return CuspReport(p.name, "INCONCLUSIVE", -fe.slope, -fp.slope, fe.r2, float(np.max(wt)), w_decays, w_rate, window, "poor exponential fit")
    rate = -fe.slope
    # exponential decay at rate > 0 dominates every power s^-mu with mu in (0, 1)
    ok = rate > 0 and w_decays
    return CuspReport(p.name, "PASS" if ok else "FAIL", rate, -fp.slope, fe.r2, float(np.max(wt)), w_decays, w_rate, window)
