import json

import numpy as np
import pytest

from rvlab.corrected import (
    GluingDescription,
    SkinningOperator,
    acylindrical_hessian,
    corrected_first_variation,
    corrected_hessian,
    corrected_vr,
    gluing_identity_check,
)
from rvlab.fuchsian import StructuralError


def two_piece(vol=9.0, a=5.0, b=7.0, prod=3.0, ids=("M1", "M2")):
    return {
        "pieces": [{"id": ids[0], "vr": a, "boundary": ["S"]}, {"id": ids[1], "vr": b, "boundary": ["S"]}],
        "interfaces": [{"surface": "S", "pieces": list(ids), "vr_product": prod}],
        "volume": vol,
    }


def test_corrected_vr_examples():
    assert corrected_vr(10, 4) == 8
    assert corrected_vr(3.25, 0) == 3.25
    assert corrected_vr(0, 2) == -1
    with pytest.raises(ValueError):
        corrected_vr(np.inf, 1)


def test_corrected_vr_affine(rng):
    x, y, dx, dy = rng.standard_normal(4)
    assert corrected_vr(x + dx, y) - corrected_vr(x, y) == pytest.approx(dx)
    assert corrected_vr(x, y + dy) - corrected_vr(x, y) == pytest.approx(-0.5 * dy)


def test_gluing_pass_and_fail():
    rep = gluing_identity_check(GluingDescription.from_dict(two_piece()), tol=1e-12)
    assert rep.passed and rep.residual == 0.0
    assert rep.corrected == {"M1": 3.5, "M2": 5.5}
    bad = gluing_identity_check(GluingDescription.from_dict(two_piece(vol=10.0)), tol=1e-12)
    assert not bad.passed and bad.residual == pytest.approx(1.0, abs=1e-12)
    assert bad.as_dict()["status"] == "FAIL"


def test_gluing_relabel_invariant():
    a = gluing_identity_check(GluingDescription.from_dict(two_piece()))
    b = gluing_identity_check(GluingDescription.from_dict(two_piece(a=7.0, b=5.0, ids=("X", "Y"))))
    assert a.residual == b.residual and a.corrected_sum == b.corrected_sum


def test_three_piece_chain_telescopes():
    d = {
        "pieces": [
            {"id": "A", "vr": 4.0, "boundary": ["S"]},
            {"id": "B", "vr": 6.0, "boundary": ["S", "T"]},
            {"id": "C", "vr": 5.0, "boundary": ["T"]},
        ],
        "interfaces": [
            {"surface": "S", "pieces": ["A", "B"], "vr_product": 2.0},
            {"surface": "T", "pieces": ["B", "C"], "vr_product": 1.0},
        ],
        "volume": 12.0,
    }
    rep = gluing_identity_check(GluingDescription.from_dict(d), tol=1e-12)
    assert rep.passed
    # the middle piece absorbs half of each interface
    assert rep.corrected == {"A": 3.0, "B": 4.5, "C": 4.5}


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d["pieces"].append(dict(d["pieces"][0])),
        lambda d: d["interfaces"][0].update(pieces=["M1", "M9"]),
        lambda d: d["pieces"][1].update(boundary=[]),
        lambda d: d["interfaces"][0].update(pieces=["M1", "M1"]),
        lambda d: d["pieces"].append({"id": "M3", "vr": 1.0, "boundary": []}),
        lambda d: d.pop("pieces"),
    ],
)
def test_malformed_descriptions(mutate):
    d = two_piece()
    mutate(d)
    with pytest.raises(StructuralError):
        GluingDescription.from_dict(d)


def test_missing_volume_is_structural():
    d = two_piece()
    d.pop("volume")
    with pytest.raises(StructuralError):
        gluing_identity_check(GluingDescription.from_dict(d))


def test_load_roundtrip(tmp_path):
    p = tmp_path / "g.json"
    p.write_text(json.dumps(two_piece()))
    g = GluingDescription.load(p)
    assert GluingDescription.from_dict(g.to_dict()).to_dict() == g.to_dict()


def test_hessian_examples():
    v = np.array([0.6, 0.8, 0.0])
    assert corrected_hessian(SkinningOperator(np.zeros((3, 3))), v).value == pytest.approx(1 / 32)
    assert corrected_hessian(SkinningOperator.scalar(0.9, 3), v).value == pytest.approx(0.0059375, abs=1e-15)
    with pytest.raises(StructuralError):
        corrected_hessian(SkinningOperator.scalar(0.9, 3), np.ones(4))


def test_hessian_nonsymmetric_reports_both(rng):
    M = np.array([[0.0, 2.0], [0.0, 0.0]])
    h = corrected_hessian(SkinningOperator(M), np.array([1.0, 1.0]))
    assert not h.symmetric
    # raw: (v + Mv).(v - Mv) = (3,1).(-1,1) = -2 ; symmetrised: (2,2).(0,0) = 0
    assert h.value == pytest.approx(-2 / 32) and h.symmetrized_value == pytest.approx(0.0)


def test_hessian_positivity_iff_contracting(rng):
    for _ in range(5):
        op = SkinningOperator.from_spectrum(rng.uniform(-0.95, 0.95, 5), rng)
        assert op.contracting()
        assert all(corrected_hessian(op, v).positive for v in rng.standard_normal((200, 5)))
    lam = np.array([1.2, 0.1, -0.3, 0.5, 0.0])
    op = SkinningOperator.from_spectrum(lam, np.random.default_rng(3))
    assert not op.contracting()
    w, V = np.linalg.eigh(op.matrix)
    assert corrected_hessian(op, V[:, np.argmax(w)]).value < 0


def test_first_variation(rng):
    op = SkinningOperator.from_spectrum(rng.uniform(-0.9, 0.9, 4), rng)
    v = rng.standard_normal(4)
    assert corrected_first_variation(v, np.zeros(4), np.zeros(4), op) == 0.0
    t = 1e-3
    plus = -0.25 * t * (v - op(v))
    minus = 0.25 * t * (v - op(v))
    assert corrected_first_variation(v, plus, minus, op) == pytest.approx(t * corrected_hessian(op, v).value, abs=1e-10)
    ii_p, ii_m = rng.standard_normal(4), rng.standard_normal(4)
    u = rng.standard_normal(4)
    lhs = corrected_first_variation(2 * v + u, ii_p, ii_m, op)
    assert lhs == pytest.approx(2 * corrected_first_variation(v, ii_p, ii_m, op) + corrected_first_variation(u, ii_p, ii_m, op))


def test_acylindrical_examples(rng):
    v = rng.standard_normal(6)
    n2 = v @ v
    assert acylindrical_hessian(SkinningOperator(np.zeros((6, 6))), v).value == pytest.approx(n2 / 16)
    assert acylindrical_hessian(SkinningOperator.scalar(0.5, 6), v).value == pytest.approx(n2 / 32)
    op = SkinningOperator.from_spectrum([1.2, 0, 0, 0, 0, 0], rng)
    w, V = np.linalg.eigh(op.matrix)
    res = acylindrical_hessian(op, V[:, np.argmax(w)])
    assert res.flagged and res.value <= 0
    with pytest.raises(StructuralError):
        acylindrical_hessian(op, np.zeros(6))


def test_operator_validation():
    with pytest.raises(StructuralError):
        SkinningOperator(np.ones((2, 3)))
    with pytest.raises(StructuralError):
        SkinningOperator(np.array([[np.nan]]))
