import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from grouplab.fourier import (
    AtomicMeasure,
    BandLimitedFunction,
    CatalogUnavailable,
    DensityVector,
    IrrepLabel,
    ball_multiplier,
    ball_multipliers,
    convolve,
    enumerate_irreps,
    evaluate_irrep,
    finite_irreps,
    fourier_coeff,
    fourier_transform,
    freq_split,
    random_band_limited,
    su2_ball_multiplier,
    su2_character,
    synthesize,
)
from grouplab.groups import finite, haar_sample, product_model, profinite, quat_mul, su2, torus_element

FINITE_WITH_CATALOG = ["z5", "z101", "s3", "q8", "sl2f3", "sl2f5", "sl2f7"]


def random_density(model, rng):
    v = rng.random(model.order)
    return DensityVector(model, v / v.mean())


def quad_multiplier(two_j, eta):
    # c_j(eta) = 2 / (pi (2j+1) |1_eta|) int_0^eta sin((2j+1) t) sin t dt
    vol = (eta - math.sin(eta) * math.cos(eta)) / math.pi
    n = two_j + 1
    with warnings.catch_warnings():
        # quad flags roundoff once the absolute error is already near 1e-14
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(lambda t: math.sin(n * t) * math.sin(t), 0, eta, epsabs=1e-14, limit=200)
    return 2 * val / (math.pi * n * vol)


# ---------------------------------------------------------------------------
# catalogs and evaluation


def test_enumerate_su2():
    labels = enumerate_irreps(su2(), 4)
    assert [p.spin for p in labels] == [0, 0.5, 1, 1.5]
    assert all(p.dim == 2 * p.spin + 1 for p in labels)


def test_enumerate_abelian_dual():
    labels = enumerate_irreps(finite("z5"), 1)
    assert len(labels) == 5 and all(p.dim == 1 for p in labels)


def test_enumerate_product_matches_brute_force():
    labels = enumerate_irreps(product_model([su2(), su2()]), 4)
    brute = [(a, b) for a in range(1, 5) for b in range(1, 5) if a * b <= 4]
    assert len(labels) == len(brute) == 8
    assert sorted((p.key[0].dim, p.key[1].dim) for p in labels) == sorted(brute)
    assert all(p.dim == p.key[0].dim * p.key[1].dim for p in labels)


@pytest.mark.parametrize("name", FINITE_WITH_CATALOG)
def test_finite_catalog_is_complete(name):
    m = finite(name)
    dims = [r.shape[1] for r in finite_irreps(m.group)]
    assert sum(d * d for d in dims) == m.order


def test_catalog_unavailable_for_large_tower():
    m = profinite("sl2z3", depth=3)
    with pytest.raises(CatalogUnavailable):
        enumerate_irreps(m, 10)


@pytest.mark.parametrize("name", FINITE_WITH_CATALOG)
def test_finite_irreps_are_unitary_homomorphisms(name):
    m = finite(name)
    rng = np.random.default_rng(0)
    g, h = rng.integers(0, m.order, 30), rng.integers(0, m.order, 30)
    for p in enumerate_irreps(m, 10):
        A, B = evaluate_irrep(m, p, g), evaluate_irrep(m, p, h)
        AB = evaluate_irrep(m, p, m.multiply(g, h))
        assert np.allclose(A @ B, AB, atol=1e-10)
        eye = np.eye(p.dim)
        assert np.abs(A @ A.conj().transpose(0, 2, 1) - eye).max() <= 1e-10
        assert np.allclose(evaluate_irrep(m, p, m.identity()), eye)


def test_su2_irreps_are_unitary_homomorphisms():
    m = su2()
    g, h = haar_sample(m, 0, 20), haar_sample(m, 1, 20)
    for p in enumerate_irreps(m, 12):
        A, B = evaluate_irrep(m, p, g), evaluate_irrep(m, p, h)
        assert np.allclose(A @ B, evaluate_irrep(m, p, quat_mul(g, h)), atol=1e-10)
        dev = A @ A.conj().transpose(0, 2, 1) - np.eye(p.dim)
        assert np.linalg.norm(dev, 2, axis=(1, 2)).max() <= 1e-10


def test_su2_fundamental_and_adjoint_on_torus():
    m = su2()
    theta = 0.37
    half = IrrepLabel("su2", 1, 2)
    assert np.allclose(evaluate_irrep(m, half, torus_element(theta)),
                       np.diag([np.exp(1j * theta), np.exp(-1j * theta)]), atol=1e-12)
    one = IrrepLabel("su2", 2, 3)
    M = evaluate_irrep(m, one, torus_element(0.3))
    assert np.allclose(M, np.diag([np.exp(0.6j), 1, np.exp(-0.6j)]), atol=1e-12)
    assert np.trace(M).real == pytest.approx(math.sin(0.9) / math.sin(0.3), abs=1e-12)


@pytest.mark.parametrize("two_j", [0, 1, 2, 5, 11])
def test_su2_traces_match_weyl_character(two_j):
    g = haar_sample(su2(), two_j, 50)
    theta = su2().angle(g)
    tr = np.trace(evaluate_irrep(su2(), IrrepLabel("su2", two_j, two_j + 1), g), axis1=1, axis2=2)
    chi = np.sin((two_j + 1) * theta) / np.sin(theta)
    assert np.allclose(tr, chi, atol=1e-9)
    assert np.allclose(su2_character(two_j, theta), chi, atol=1e-9)


# ---------------------------------------------------------------------------
# Fourier coefficients


def test_coefficients_of_delta_and_haar():
    m = finite("sl2f3")
    delta = AtomicMeasure.delta(m)
    haar = DensityVector.constant(m)
    for p in enumerate_irreps(m, 10):
        assert np.allclose(fourier_coeff(delta, p), np.eye(p.dim))
        if not p.is_trivial:
            assert np.abs(fourier_coeff(haar, p)).max() <= 1e-12


def test_su2_two_point_average():
    m = su2()
    mu = AtomicMeasure.uniform(m, np.stack([torus_element(0.2), torus_element(-0.2)]))
    c = fourier_coeff(mu, IrrepLabel("su2", 1, 2))
    assert np.allclose(c, math.cos(0.2) * np.eye(2), atol=1e-14)


def test_probability_coefficients_are_contractions():
    m = su2()
    mu = AtomicMeasure.uniform(m, haar_sample(m, 4, 40))
    for p in enumerate_irreps(m, 10):
        assert np.linalg.norm(fourier_coeff(mu, p), 2) <= 1 + 1e-12


@pytest.mark.parametrize("name", FINITE_WITH_CATALOG)
def test_parseval_on_random_densities(name):
    m = finite(name)
    rng = np.random.default_rng(1)
    for _ in range(100 if m.order <= 120 else 10):
        f = random_density(m, rng)
        split = freq_split(f, 10 ** 6)
        direct = float(np.mean(f.values ** 2))
        assert abs(split.total - direct) <= 1e-10 * direct


@pytest.mark.parametrize("name", ["s3", "q8", "sl2f3", "sl2f5"])
def test_round_trip_density_to_synthesis(name):
    m = finite(name)
    f = random_density(m, np.random.default_rng(2))
    F = fourier_transform(f)
    back = synthesize(F, m.elements())
    assert np.abs(back - f.values).max() <= 1e-10


def test_synthesize_constant_and_character():
    m = su2()
    x = haar_sample(m, 5, 20)
    triv = IrrepLabel("su2", 0, 1)
    const = BandLimitedFunction(m, {triv: np.array([[2.5]])})
    assert np.allclose(synthesize(const, x), 2.5)
    chi = BandLimitedFunction(m, {IrrepLabel("su2", 1, 2): np.eye(2) / 2})
    theta = 0.7
    assert synthesize(chi, torus_element(theta)) == pytest.approx(2 * math.cos(theta), abs=1e-12)


# ---------------------------------------------------------------------------
# ball multipliers


def test_ball_multiplier_special_values():
    m = su2()
    for eta in (0.01, 0.5, 2.0):
        assert ball_multiplier(m, eta, IrrepLabel("su2", 0, 1)) == pytest.approx(1.0, abs=1e-14)
    for n in range(1, 8):
        assert abs(ball_multiplier(m, math.pi, IrrepLabel("su2", n, n + 1))) <= 1e-14
    assert su2_ball_multiplier(1, math.pi / 2) == pytest.approx(4 / (3 * math.pi), abs=1e-12)
    with pytest.raises(ValueError):
        ball_multiplier(m, 0.0, IrrepLabel("su2", 1, 2))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 40), st.floats(1e-3, math.pi))
def test_su2_multiplier_matches_quadrature(two_j, eta):
    assert su2_ball_multiplier(two_j, eta) == pytest.approx(quad_multiplier(two_j, eta), abs=1e-10)


def test_su2_multiplier_matches_haar_average_of_normalized_character():
    # c_j(eta) = E[chi_j(g)] / (2j+1) over g uniform in the ball
    x = haar_sample(su2(), 9, 400_000)
    theta = su2().angle(x)
    inside = theta[theta < 0.8]
    for n in (1, 2, 4):
        chi = np.sin((n + 1) * inside) / np.sin(inside) / (n + 1)
        se = chi.std() / math.sqrt(len(inside))
        assert abs(chi.mean() - su2_ball_multiplier(n, 0.8)) <= 4 * se


def test_su2_multiplier_bound_l1_c01():
    for eta in (0.01, 0.05, 0.2):
        for n in range(51):
            assert abs(su2_ball_multiplier(n, eta) - 1) <= (n + 1) * eta
            assert abs(su2_ball_multiplier(n, eta)) <= 1 + 1e-14


def test_profinite_multipliers_are_kernel_indicators_and_scalar():
    m = profinite("sl2z2", depth=3)
    for k in range(4):
        eta = 0.5 ** k
        ball = np.flatnonzero(m.dist_to_identity() < eta)
        P = DensityVector.indicator(m, ball)
        P = DensityVector(m, P.values * m.order / len(ball))
        for p in enumerate_irreps(m, 10):
            c = ball_multiplier(m, eta, p)
            assert c in (0.0, 1.0)
            direct = fourier_coeff(P, p)
            assert np.abs(direct - c * np.eye(p.dim)).max() <= 1e-10
        PP = convolve(P, P)
        assert np.allclose(PP.values, P.values, atol=1e-10)


def test_ball_multipliers_collects_scalars():
    labels = enumerate_irreps(su2(), 5)
    bm = ball_multipliers(su2(), 0.3, labels)
    assert set(bm.values) == set(labels)


# ---------------------------------------------------------------------------
# convolution


def test_convolution_with_identity():
    m = finite("sl2f5")
    f = random_density(m, np.random.default_rng(3))
    delta = DensityVector.indicator(m, [0])
    delta = DensityVector(m, delta.values * m.order)
    assert np.allclose(convolve(f, delta).values, f.values)
    assert np.allclose(convolve(delta, f).values, f.values)


@pytest.mark.parametrize("name", ["s3", "q8", "sl2f3", "sl2f5"])
def test_convolution_order_convention(name):
    m = finite(name)
    rng = np.random.default_rng(4)
    f, g = random_density(m, rng), random_density(m, rng)
    fg = convolve(f, g)
    # brute force (f*g)(x) = mean_y f(y) g(y^-1 x)
    G = m.group
    brute = np.array([np.mean([f.values[y] * g.values[G.mul(G.inv[y], x)] for y in range(m.order)])
                      for x in range(m.order)])
    assert np.allclose(fg.values, brute, atol=1e-12)
    for p in enumerate_irreps(m, 10):
        lhs = fourier_coeff(fg, p)
        rhs = fourier_coeff(g, p) @ fourier_coeff(f, p)
        assert np.linalg.norm(lhs - rhs) <= 1e-10


def test_young_inequality_on_random_pairs():
    rng = np.random.default_rng(5)
    for k in range(100):
        m = finite(FINITE_WITH_CATALOG[k % len(FINITE_WITH_CATALOG)])
        f = DensityVector(m, rng.standard_normal(m.order))
        g = DensityVector(m, rng.standard_normal(m.order))
        assert convolve(f, g).norm2() <= f.norm1() * g.norm2() * (1 + 1e-12)


def test_low_frequency_part_is_submultiplicative():
    rng = np.random.default_rng(6)
    for k in range(100):
        m = finite(["s3", "q8", "sl2f3", "sl2f5"][k % 4])
        f, g = random_density(m, rng), random_density(m, rng)
        D = 1 + k % 4
        lhs = freq_split(convolve(f, g), D).low
        assert lhs <= freq_split(f, D).low * freq_split(g, D).low * (1 + 1e-12)


def test_freq_split_trivial_cases():
    m = finite("sl2f3")
    c = DensityVector.constant(m, 3.0)
    s = freq_split(c, 2)
    assert s.low == pytest.approx(9.0) and s.high == pytest.approx(0.0, abs=1e-12)
    three = next(p for p in enumerate_irreps(m, 3) if p.dim == 3)
    f = BandLimitedFunction(m, {three: np.eye(3)})
    s = freq_split(f, 2)
    assert s.low == 0 and s.high == pytest.approx(f.norm2_sq())
    with pytest.raises(ValueError):
        freq_split(f, 0.5)


def test_band_limited_convolution_and_smoothing():
    m = su2()
    labels = enumerate_irreps(m, 6)
    rng = np.random.default_rng(7)
    f, g = random_band_limited(m, labels, rng), random_band_limited(m, labels, rng)
    fg = convolve(f, g)
    for p in labels:
        assert np.allclose(fg.coeffs[p], g.coeffs[p] @ f.coeffs[p])
    sm = f.smooth(0.3)
    for p in labels:
        assert np.allclose(sm.coeffs[p], su2_ball_multiplier(p.key, 0.3) * f.coeffs[p])


def test_atomic_convolution_finite_is_exact():
    m = finite("z5")
    mu = AtomicMeasure.uniform(m, np.array([1, 4]))
    nu = convolve(mu, mu)
    got = dict(zip(nu.atoms.tolist(), nu.weights.tolist()))
    assert got == pytest.approx({0: 0.5, 2: 0.25, 3: 0.25})


def test_atomic_convolution_su2_budget_is_seeded():
    m = su2()
    mu = AtomicMeasure.uniform(m, haar_sample(m, 0, 300))
    a = convolve(mu, mu, budget=1000, seed=3)
    b = convolve(mu, mu, budget=1000, seed=3)
    assert len(a) == 1000
    assert np.array_equal(a.atoms, b.atoms)
    small = convolve(mu, AtomicMeasure.delta(m), budget=1000)
    assert np.allclose(small.atoms, mu.atoms)


def test_convolution_rejects_mixed_models():
    with pytest.raises(ValueError):
        convolve(DensityVector.constant(finite("z5")), DensityVector.constant(finite("s3")))


def test_atomic_measure_validation():
    m = finite("z5")
    with pytest.raises(ValueError):
        AtomicMeasure(m, np.array([1, 2]), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        AtomicMeasure(m, np.array([1, 2]), np.array([0.5, 0.5]), symmetric=True)
    assert AtomicMeasure(m, np.array([1, 4]), np.array([0.5, 0.5]), symmetric=True).is_symmetric()
