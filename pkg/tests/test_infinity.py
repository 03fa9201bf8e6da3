import numpy as np
import pytest

from rvlab.fuchsian import MoebiusMap, Quadrature, zero_vector
from rvlab.infinity import (
    CriticalPointError,
    MetricError,
    assemble_infinity_tensors,
    diii_orthogonality_check,
    gauss_curvature,
    ii0_from_uniformizing_map,
    schwarzian,
)
from rvlab.tensors import MetricField


def random_moebius(rng):
    while True:
        m = rng.standard_normal(4)
        det = m[0] * m[3] - m[1] * m[2]
        if det > 0.2:
            return MoebiusMap(*(m / np.sqrt(det)))


@pytest.fixture
def pts(rng):
    return rng.uniform(-1, 1, 16) + 1j * rng.uniform(0.5, 1.5, 16)


@pytest.mark.parametrize("method", ["cauchy", "stencil"])
def test_schwarzian_oracles(method, pts):
    assert abs(schwarzian(lambda z: z**2, [1.0], method=method).S[0] + 1.5) < 1e-7
    # S(z^2) = -3/(2 z^2)
    assert np.allclose(schwarzian(lambda z: z**2, pts + 2, method=method).S, -1.5 / (pts + 2) ** 2, atol=1e-6)
    assert np.max(np.abs(schwarzian(np.exp, pts, method=method).S + 0.5)) < 1e-6


@pytest.mark.parametrize("method,tol", [("cauchy", 1e-8), ("stencil", 1e-5)])
def test_moebius_kernel(method, tol, rng):
    z = rng.uniform(-1, 1, 10) + 1j * rng.uniform(1, 2, 10)
    worst = 0.0
    for _ in range(100):
        A = random_moebius(rng)
        p = z[np.abs(A.c * z + A.d) > 0.5]
        worst = max(worst, np.max(np.abs(schwarzian(A, p, method=method, radius=0.1).S), initial=0))
    assert worst < tol


def test_moebius_invariance(pts, rng):
    f = lambda z: np.exp(z) + 0.3 * z**2  # noqa: E731
    base = schwarzian(f, pts).S
    for _ in range(100):
        A = random_moebius(rng)
        fz = f(pts)
        if np.min(np.abs(A.c * fz + A.d)) < 1.0:
            continue
        # post-composition leaves S unchanged
        assert np.allclose(schwarzian(lambda z: A(f(z)), pts, radius=0.05).S, base, atol=1e-6)
    B = MoebiusMap(1.0, 0.5, 0.0, 1.0)
    # pre-composition: S(f o B) = S(f)(B) B'^2 with B' = 1 for a translation
    assert np.allclose(schwarzian(lambda z: f(B(z)), pts).S, schwarzian(f, B(pts)).S, atol=1e-8)


def test_chain_rule(pts):
    g = np.exp
    f = lambda z: z**2 + 0.5 * z  # noqa: E731
    lhs = schwarzian(lambda z: g(f(z)), pts).S
    rhs = schwarzian(g, f(pts)).S * (2 * pts + 0.5) ** 2 + schwarzian(f, pts).S
    assert np.max(np.abs(lhs - rhs)) < 1e-6


def test_critical_point_error():
    with pytest.raises(CriticalPointError) as exc:
        schwarzian(lambda z: z**2, [0.0, 1.0])
    assert exc.value.where == 0


def test_error_estimate_small_for_smooth(pts):
    sf = schwarzian(np.exp, pts)
    assert np.max(sf.error) < 1e-8 and sf.order == 32


def test_ii0_spot_value():
    ii0 = ii0_from_uniformizing_map(lambda z: z**2, [1.0])
    # -Re(-3/2 dz^2) = Re(+3/2 dz^2): dz^2 coefficient 3/4, dx^2 component +3/2
    assert abs(ii0.a[0] - 0.75) < 1e-8
    assert abs(ii0.matrix()[0, 0, 0] - 1.5) < 1e-7
    A = MoebiusMap(1.0, 2.0, 0.0, 1.0)
    assert np.max(np.abs(ii0_from_uniformizing_map(A, [1j, 2j]).a)) < 1e-10


def _uhp_patch(n=41):
    x = np.linspace(-0.2, 0.2, n)
    X, Y = np.meshgrid(x, 1 + x)
    return X + 1j * Y


def test_hyperbolic_background():
    z = _uhp_patch()
    rho = 1 / z.imag**2
    I = MetricField.conformal(z, rho)
    zero = MetricField(z, 0.0, 0.0, rho)
    K = gauss_curvature(I)
    assert np.max(np.abs(K[2:-2, 2:-2] + 1)) < 1e-3
    T = assemble_infinity_tensors(I, zero, K=-1.0)
    assert np.allclose(T.H, 1.0)
    assert np.allclose(T.II.e, 0.5 * I.e) and np.all(T.II.a == 0)
    assert np.allclose(T.B, 0.5 * np.eye(2))
    assert np.allclose(T.III.matrix(), 0.25 * I.matrix())


def test_flat_background():
    z = _uhp_patch(11)
    I = MetricField.conformal(z, np.ones(z.shape))
    T = assemble_infinity_tensors(I, MetricField(z, 0.0, 0.0, 1.0))
    assert np.allclose(T.K, 0) and np.allclose(T.H, 0)
    assert np.allclose(T.II.matrix(), 0) and np.allclose(T.III.matrix(), 0)


def test_identities_random_ii0(rng):
    z = _uhp_patch(21)
    rho = 1 / z.imag**2
    I = MetricField.conformal(z, rho)
    II0 = MetricField(z, 0.05 * (rng.standard_normal(z.shape) + 1j * rng.standard_normal(z.shape)), 0.0, rho)
    T = assemble_infinity_tensors(I, II0)
    res = T.identity_residuals()
    assert max(res.values()) < 1e-10
    # III - II0 - I/4 is the (B - 1/2) quadratic remainder
    G = I.matrix()
    B0 = T.B - 0.5 * T.H[..., None, None] * np.eye(2)
    rem = np.einsum("...ki,...kl,...lj->...ij", B0, G, B0)
    lhs = T.III.matrix() - II0.matrix() * T.H[..., None, None] - 0.25 * (T.H**2)[..., None, None] * G
    assert np.max(np.abs(lhs - rem)) < 1e-10 * np.max(np.abs(G))


def test_assembly_rejects_bad_input():
    z = _uhp_patch(5)
    ind = MetricField(z, 2.0, 1.0, 1.0)
    with pytest.raises(MetricError):
        assemble_infinity_tensors(ind, MetricField(z, 0.0, 0.0, 1.0), K=0.0)
    I = MetricField.conformal(z, np.ones(z.shape))
    with pytest.raises(MetricError):
        assemble_infinity_tensors(I, MetricField(z, 0.0, 1.0, 1.0), K=0.0)


def test_orthogonality_check(group, basis6):
    q = Quadrature.fundamental_domain(group, 12, 1)
    v = basis6[0]
    tv = v.tensor(q.z, q.rho)
    rep = diii_orthogonality_check(v, tv * -0.25, basis6, q)
    assert rep.passed and np.max(rep.ratios) < 1e-12
    zero = zero_vector(group)
    rep0 = diii_orthogonality_check(zero, zero.tensor(q.z, q.rho), basis6, q)
    assert np.all(rep0.inner == 0)
    w = basis6[2].tensor(q.z, q.rho)
    r1 = diii_orthogonality_check(v, tv * -0.25 + w * 0.1, basis6, q)
    r2 = diii_orthogonality_check(v, tv * -0.25 + w * 0.2, basis6, q)
    assert not r2.passed or r2.ratios[2] > 0
    assert r2.ratios[2] == pytest.approx(2 * r1.ratios[2], rel=1e-10)
