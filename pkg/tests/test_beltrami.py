import numpy as np
import pytest

from rvlab.beltrami import (
    BeltramiField,
    BeltramiNormError,
    ExtrapolationError,
    QCMap,
    StepSizeError,
    cauchy_first_order,
    metric_variation,
    mu_from_phi,
    pullback_metric,
    reflect_uhp,
    solve_beltrami,
)
from rvlab.fuchsian import MoebiusMap
from rvlab.grid import Grid, cauchy_at, read_grid, write_grid


def radial_mu(p):
    """``mu`` of ``z |z|^p`` on the unit disk: ``p/(p+2) z/zbar``."""

    def fn(z):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(np.abs(z) < 1, p / (p + 2) * z / np.conj(z), 0)

    return fn


def rel_err_disk(f, p, g):
    Z = g.points()
    ins = np.abs(Z) < 1
    ex = Z * np.abs(Z) ** p
    return np.sqrt(np.sum(np.abs(f.samples - ex)[ins] ** 2) / np.sum(np.abs(ex[ins]) ** 2))


def test_zero_mu_is_identity():
    g = Grid.square(64, 1.5)
    f = solve_beltrami(BeltramiField(g, np.zeros((64, 64), complex)))
    assert np.max(np.abs(f.samples - g.points())) < 1e-12
    assert f.info["residual_l2"] == 0.0


@pytest.mark.parametrize("p", [1, 2])
def test_radial_oracle(p):
    g = Grid.square(256, 1.1)
    mu = BeltramiField.from_function(radial_mu(p), g, supersample=4)
    f = solve_beltrami(mu, extrapolate=True)
    assert rel_err_disk(f, p, g) < 1e-2
    # the solution fixes 0 and 1
    assert abs(f(np.array([0.0]))[0]) < 1e-2 and abs(f(np.array([1.0 + 0j]))[0] - 1) < 1e-2


def test_extrapolation_improves_accuracy():
    g = Grid.square(128, 1.1)
    mu = BeltramiField.from_function(radial_mu(2), g, supersample=4)
    plain = rel_err_disk(solve_beltrami(mu), 2, g)
    rich = rel_err_disk(solve_beltrami(mu, extrapolate=True), 2, g)
    assert rich < 0.7 * plain


def test_first_order_linearisation():
    # f_t = z + t C(mu) + O(t^2)
    g = Grid.square(128, 2.0)
    mu = BeltramiField.from_function(lambda z: np.where(np.abs(z) < 1, 0.3 * z**2, 0), g, 2)
    lin = cauchy_first_order(mu)
    Z = g.points()
    errs = []
    for t in (0.1, 0.05, 0.025):
        f = solve_beltrami(mu * t, normalize=False)
        errs.append(np.max(np.abs(f.samples - Z - t * lin)))
    slopes = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(slopes >= 1.9)


def test_far_field_decay():
    # principal solution: f(z) - z = O(1/z) away from the support
    g = Grid.square(256, 4.0)
    mu = BeltramiField.from_function(lambda z: np.where(np.abs(z) < 0.5, 0.3 + 0j, 0), g, 2)
    f = solve_beltrami(mu, normalize=False)
    Z = g.points()
    d = np.abs(f.samples - Z)
    near = d[np.abs(np.abs(Z) - 1.5) < 0.05].mean()
    far = d[np.abs(np.abs(Z) - 3.0) < 0.05].mean()
    assert far / near == pytest.approx(0.5, rel=0.05)


def test_residual_reported():
    g = Grid.square(128, 1.1)
    f = solve_beltrami(BeltramiField.from_function(radial_mu(2), g, 2), tol=1e-10)
    assert f.info["residual_l2"] < 1e-10 and f.info["iterations"] > 1


def test_cauchy_at_matches_grid():
    g = Grid.square(64, 1.0)
    h = g.sample(lambda z: np.exp(-4 * np.abs(z) ** 2) + 0j)
    on_grid = cauchy_first_order(BeltramiField(g, h))
    pts = g.points()[[10, 30, 50], [20, 32, 44]]
    assert np.allclose(cauchy_at(h, g, pts), on_grid[[10, 30, 50], [20, 32, 44]], atol=1e-10)


def test_norm_guard_reports_location():
    g = Grid.square(16, 1.0)
    s = np.zeros((16, 16), complex)
    s[3, 7] = 1.2
    with pytest.raises(BeltramiNormError) as exc:
        solve_beltrami(BeltramiField(g, s))
    assert exc.value.sup == pytest.approx(1.2)
    assert exc.value.where == g.points()[3, 7]


def test_mu_from_phi_cases():
    g = Grid.square(8, 0.5)
    assert mu_from_phi(lambda z: 0 * z, 1.0, g).sup_norm == 0.0
    assert np.allclose(mu_from_phi(lambda z: 1 + 0 * z, 1.0, g).samples, 0.5)
    with pytest.raises(BeltramiNormError):
        mu_from_phi(lambda z: 3 + 0 * z, 1.0, g)
    # outside the disk model the coefficient vanishes
    m = mu_from_phi(lambda z: 1 + 0 * z, "disk", Grid.square(16, 1.5))
    assert np.all(m.samples[np.abs(m.grid.points()) >= 1] == 0)


def test_reflection_symmetry():
    g = Grid.square(32, 2.0)
    mu = BeltramiField.from_function(lambda z: np.where(z.imag > 0, 0.2 * np.exp(1j * z.real), 0), g)
    r = reflect_uhp(mu)
    assert np.allclose(r.samples[::-1, :], np.conj(r.samples))
    f = solve_beltrami(r)
    Z = g.points()
    # the symmetric solution commutes with conjugation
    assert np.allclose(f.samples[::-1, :], np.conj(f.samples), atol=1e-10)
    assert np.max(np.abs(f.samples[Z.imag > 0].imag)) > 0


def test_equivariance_exact_and_truncated(rng, group):
    from rvlab.beltrami import equivariance_residual
    from rvlab.fuchsian import poincare_series

    z = rng.uniform(-2, 2, 200) + 1j * rng.uniform(0.2, 3, 200)
    # 1/z^2 dz^2 is invariant under every dilation z -> lam z
    dil = [MoebiusMap(np.sqrt(lam), 0.0, 0.0, 1 / np.sqrt(lam)) for lam in rng.uniform(0.2, 5, 200)]
    assert equivariance_residual(lambda w: 1 / w**2, "uhp", dil, z) < 1e-8
    # for truncated Poincare series the residual tracks the automorphy residual
    pts = group.fundamental_domain.random_points(40, rng)
    res = [equivariance_residual(poincare_series([1.0], group, c, check=False), "uhp", group.all_generators(), pts) for c in (2, 4)]
    assert res[1] < res[0]


def test_pullback_symbolic():
    # f = z|z|^2: f_z = 2|z|^2, f_zbar = z^2, so f^*|dw|^2 has dz^2 part 2|z|^2 zbar^2 and dzdzbar part 5|z|^4
    f = QCMap.from_functions(lambda z: z * np.abs(z) ** 2, lambda z: 2 * np.abs(z) ** 2 + 0j, lambda z: z**2)
    z = np.array([0.3 + 0.4j, -0.7 + 0.1j])
    P = pullback_metric(f, 1.0, z)
    assert np.allclose(P.a, 2 * np.abs(z) ** 2 * np.conj(z) ** 2, rtol=1e-14)
    assert np.allclose(P.e, 5 * np.abs(z) ** 4, rtol=1e-14)


def test_pullback_identity_and_isometry(rng):
    z = rng.uniform(-1, 1, 30) + 1j * rng.uniform(0.3, 2, 30)
    I = pullback_metric(QCMap.identity(), "uhp", z)
    assert np.all(I.a == 0) and np.allclose(I.e, 1 / z.imag**2, rtol=0, atol=0)
    A = MoebiusMap(2.0, 1.0, 1.0, 1.0)
    fA = QCMap.from_functions(A, lambda w: 1 / (A.c * w + A.d) ** 2)
    P = pullback_metric(fA, "uhp", z)
    assert np.max(np.abs(P.a)) == 0.0
    assert np.allclose(P.e, 1 / z.imag**2, rtol=1e-10)


def test_inverse_and_extrapolation_guard():
    g = Grid.square(128, 1.1)
    f = solve_beltrami(BeltramiField.from_function(radial_mu(2), g, 4))
    w = np.array([0.3 + 0.2j, -0.5j])
    assert np.allclose(f(f.inverse(w)), w, atol=1e-12)
    with pytest.raises(ExtrapolationError):
        f(np.array([5.0 + 0j]))


def test_metric_variation_zero_direction():
    g = Grid.square(32, 1.05)
    z = np.array([0.1 + 0.1j])
    mv = metric_variation(lambda w: 0 * w, z, g)
    assert np.all(mv.field.a == 0) and np.all(mv.field.e == 0)


def test_metric_variation_bad_steps():
    g = Grid.square(64, 1.05)
    with pytest.raises(StepSizeError):
        # growing steps make the successive differences grow
        metric_variation(lambda w: 1 + 0 * w, np.array([0.1j]), g, steps=(2.5e-3, 5e-3, 1e-2))
    with pytest.raises(StepSizeError):
        metric_variation(lambda w: 1 + 0 * w, np.array([0.1j]), g, steps=(10.0, 5.0))


def test_grid_file_roundtrip(tmp_path):
    g = Grid.square(8, 1.0, 0.5j)
    s = np.arange(64).reshape(8, 8) * (1 + 2j)
    write_grid(tmp_path / "a.grid", g, s, {"name": "mu"})
    g2, s2, meta = read_grid(tmp_path / "a.grid")
    assert g2 == g and np.array_equal(s2, s) and meta["name"] == "mu"
    (tmp_path / "b.grid").write_bytes(b"garbage!")
    with pytest.raises(ValueError):
        read_grid(tmp_path / "b.grid")
