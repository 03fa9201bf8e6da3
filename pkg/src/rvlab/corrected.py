"""Corrected renormalized volume: definition, gluing bookkeeping and the
second-variation formulas on a coefficient space."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fuchsian import StructuralError


@dataclass
class SkinningOperator:
    """Derivative of the skinning map as a matrix on RQ coefficients."""

    matrix: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise StructuralError("skinning operator must be a square matrix")
        if not np.all(np.isfinite(m)):
            raise StructuralError("skinning operator has non-finite entries")
        self.matrix = m

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.T, atol=1e-12))

    def symmetric_part(self) -> np.ndarray:
        return 0.5 * (self.matrix + self.matrix.T)

    def symmetric_spectrum(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.symmetric_part())

    def contracting(self) -> bool:
        """Symmetric-part spectrum inside ``(-1, 1)``."""
        s = self.symmetric_spectrum()
        return bool(np.all(np.abs(s) < 1))

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.dim:
            raise StructuralError(f"vector of length {v.shape[-1]} for operator of size {self.dim}")
        return v @ self.matrix.T

    @classmethod
    def from_spectrum(cls, eigenvalues, rng: np.random.Generator) -> "SkinningOperator":
        """Symmetric operator with a random orthonormal eigenbasis."""
        lam = np.asarray(eigenvalues, dtype=float)
        q, _ = np.linalg.qr(rng.standard_normal((lam.size, lam.size)))
        return cls(q @ np.diag(lam) @ q.T, {"symmetric": True, "spectrum": lam.tolist()})

    @classmethod
    def scalar(cls, lam: float, dim: int) -> "SkinningOperator":
        return cls(lam * np.eye(dim), {"symmetric": True, "spectrum": [lam] * dim})


def _gram(dim, gram):
    if gram is None:
        return np.eye(dim)
    g = np.asarray(gram, dtype=float)
    if g.shape != (dim, dim):
        raise StructuralError("Gram matrix does not match the coefficient space")
    return g


def corrected_vr(vr_M: float, vr_product: float) -> float:
    if not (np.isfinite(vr_M) and np.isfinite(vr_product)):
        raise ValueError("volumes must be finite")
    return vr_M - 0.5 * vr_product


@dataclass
class Piece:
    id: str
    vr: float
    boundary: list


@dataclass
class Interface:
    surface: str
    pieces: tuple
    vr_product: float


@dataclass
class GluingDescription:
    """Pieces glued along interfaces.  Each interface names two pieces whose
    boundary data on ``surface`` must be skinning images of each other."""

    pieces: list
    interfaces: list
    volume: float | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "GluingDescription":
        try:
            pieces = [Piece(str(p["id"]), float(p["vr"]), list(p.get("boundary", []))) for p in d["pieces"]]
            interfaces = [
                Interface(str(i["surface"]), tuple(i["pieces"]), float(i["vr_product"])) for i in d["interfaces"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise StructuralError(f"malformed gluing description: {exc}") from exc
        vol = d.get("volume")
        g = cls(pieces, interfaces, None if vol is None else float(vol))
        g.validate()
        return g

    @classmethod
    def load(cls, path) -> "GluingDescription":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {
            "pieces": [{"id": p.id, "vr": p.vr, "boundary": p.boundary} for p in self.pieces],
            "interfaces": [{"surface": i.surface, "pieces": list(i.pieces), "vr_product": i.vr_product} for i in self.interfaces],
            "volume": self.volume,
        }

    def validate(self):
        ids = [p.id for p in self.pieces]
        if len(set(ids)) != len(ids):
            raise StructuralError("duplicate piece ids")
        by_id = {p.id: p for p in self.pieces}
        for itf in self.interfaces:
            if len(itf.pieces) != 2 or itf.pieces[0] == itf.pieces[1]:
                raise StructuralError(f"interface {itf.surface} must join two distinct pieces")
            for pid in itf.pieces:
                if pid not in by_id:
                    raise StructuralError(f"interface {itf.surface} references unknown piece {pid}")
                if itf.surface not in by_id[pid].boundary:
                    raise StructuralError(f"piece {pid} has no boundary {itf.surface}")
        if not self.interfaces:
            raise StructuralError("no interfaces")
        # pieces must form a connected chain/tree
        seen, stack = {ids[0]}, [ids[0]]
        while stack:
            cur = stack.pop()
            for itf in self.interfaces:
                if cur in itf.pieces:
                    other = itf.pieces[1] if itf.pieces[0] == cur else itf.pieces[0]
                    if other not in seen:
                        seen.add(other)
                        stack.append(other)
        if seen != set(ids):
            raise StructuralError("gluing graph is disconnected")


@dataclass
class GluingReport:
    passed: bool
    residual: float
    glued: float
    corrected_sum: float
    corrected: dict
    tol: float

    def as_dict(self) -> dict:
        return {
            "status": "PASS" if self.passed else "FAIL",
            "residual": self.residual,
            "glued_volume": self.glued,
            "corrected_sum": self.corrected_sum,
            "corrected": self.corrected,
            "tol": self.tol,
        }


def gluing_identity_check(g: GluingDescription, tol: float = 1e-9) -> GluingReport:
    """``vol = sum V_R(pieces) - sum V_R(interface products)``.

    The same total is also formed as a sum of corrected volumes, each
    interface term split in half between its two pieces.
    """
    g.validate()
    if g.volume is None:
        raise StructuralError("closed volume not supplied")
    glued = sum(p.vr for p in g.pieces) - sum(i.vr_product for i in g.interfaces)
    corrected = {}
    for p in g.pieces:
        share = sum(i.vr_product for i in g.interfaces if p.id in i.pieces)
        corrected[p.id] = corrected_vr(p.vr, share)
    csum = sum(corrected.values())
    residual = abs(g.volume - glued)
    return GluingReport(residual < tol and abs(g.volume - csum) < tol, residual, glued, csum, corrected, tol)


def corrected_first_variation(v, ii0_plus, ii0_minus, dsigma: SkinningOperator, gram=None) -> float:
    """``(1/8)(-<v, II0+> + <dsigma v, II0->)`` in coefficient space.

    The boundary variation is ``DI(v, dsigma v)``; its pairing with II_0 on
    each side reduces to the RQ inner product of the tangent component.
    """
    v = np.asarray(v, dtype=float)
    G = _gram(dsigma.dim, gram)
    dv = dsigma(v)
    return float(-(v @ G @ np.asarray(ii0_plus)) + dv @ G @ np.asarray(ii0_minus)) / 8.0


@dataclass
class HessianVerdict:
    value: float
    positive: bool
    symmetrized_value: float
    symmetrized_positive: bool
    symmetric: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _quad(v, G, A):
    return float((v + A @ v) @ G @ (v - A @ v)) / 32.0


def corrected_hessian(dsigma: SkinningOperator, v, gram=None) -> HessianVerdict:
    """``(1/32)<v + dsigma v, v - dsigma v>``, raw and with symmetrized dsigma."""
    v = np.asarray(v, dtype=float)
    if v.shape != (dsigma.dim,):
        raise StructuralError("dimension mismatch")
    G = _gram(dsigma.dim, gram)
    raw = _quad(v, G, dsigma.matrix)
    sym = _quad(v, G, dsigma.symmetric_part())
    return HessianVerdict(raw, raw > 0, sym, sym > 0, dsigma.is_symmetric)


@dataclass
class AcylindricalHessian:
    value: float
    flagged: bool


def acylindrical_hessian(dsigma: SkinningOperator, v, gram=None) -> AcylindricalHessian:
    """``(1/16) sum_i <v_i, v_i - dsigma_i(v)>`` over the boundary components.

    ``v`` concatenates the component coefficients; ``dsigma`` acts on the
    whole vector.  Non-positive values are flagged.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (dsigma.dim,):
        raise StructuralError("dimension mismatch")
    if not np.any(v):
        raise StructuralError("v must be nonzero")
    G = _gram(dsigma.dim, gram)
    val = float(v @ G @ (v - dsigma(v))) / 16.0
    return AcylindricalHessian(val, val <= 0)
