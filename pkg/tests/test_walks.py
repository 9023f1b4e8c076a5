import math

import numpy as np
import pytest

from grouplab import walks
from grouplab.fourier import (
    AtomicMeasure,
    DensityVector,
    enumerate_irreps,
    fourier_coeff,
    random_band_limited,
)
from grouplab.groups import finite, profinite, reference_fit, su2
from grouplab.lpaley import ScaleLadder, tower_ladder
from grouplab.walks import (
    complement_gap,
    convolution_power,
    exceptional_subspace,
    flattening_ladder,
    generating_measure,
    scale_gap_certificate,
    transfer_matrix,
    transfer_norm,
)

FINITE = ["z5", "z101", "s3", "q8", "sl2f3", "sl2f5", "sl2f7"]


def lazy_z101():
    m = finite("z101")
    return m, AtomicMeasure(m, np.array([1, 100]), np.array([0.5, 0.5]), symmetric=True)


def haar(model):
    return AtomicMeasure.uniform(model, model.elements(), symmetric=True)


def brute_power(model, atoms, weights, l):
    """Weights of the l-fold convolution by enumerating all l-tuples of atoms."""
    out = {}
    for idx in np.ndindex(*(len(atoms),) * l):
        g = model.identity()
        w = 1.0
        for k in idx:
            g = model.multiply(g, atoms[k])
            w *= weights[k]
        out[int(g)] = out.get(int(g), 0.0) + w
    return out


def as_dict(mu):
    return {int(a): float(w) for a, w in zip(mu.atoms, mu.weights) if w > 0}


# ---------------------------------------------------------------------------
# convolution powers


def test_delta_power_is_delta():
    m = finite("sl2f5")
    d = AtomicMeasure.delta(m)
    assert as_dict(convolution_power(d, 5)) == {int(m.identity()): 1.0}


def test_z5_square_of_symmetric_step():
    m = finite("z5")
    mu = AtomicMeasure(m, np.array([1, 4]), np.array([0.5, 0.5]))
    got = as_dict(convolution_power(mu, 2))
    assert got == pytest.approx({0: 0.5, 2: 0.25, 3: 0.25}, abs=1e-15)


@pytest.mark.parametrize("name", ["s3", "q8", "sl2f5"])
def test_powers_match_tuple_enumeration(name):
    m = finite(name)
    rng = np.random.default_rng(0)
    atoms = rng.choice(m.order, 3, replace=False)
    weights = rng.random(3) + 0.2
    weights /= weights.sum()
    mu = AtomicMeasure(m, atoms, weights)
    for l in (2, 3):
        got = as_dict(convolution_power(mu, l))
        want = brute_power(m, atoms, weights, l)
        assert set(got) == set(want)
        for g in want:
            assert got[g] == pytest.approx(want[g], abs=1e-14)


@pytest.mark.parametrize("name", FINITE)
def test_fourier_of_square_is_square_of_fourier(name):
    m = finite(name)
    mu = generating_measure(m, "random", seed=1, size=6)
    mu2 = convolution_power(mu, 2)
    for p in enumerate_irreps(m, 100):
        F = fourier_coeff(mu, p)
        assert np.allclose(fourier_coeff(mu2, p), F @ F, atol=1e-12)


def test_band_limited_power_and_validation():
    m = su2()
    f = random_band_limited(m, enumerate_irreps(m, 4), np.random.default_rng(2))
    f3 = convolution_power(f, 3)
    for p, c in f.coeffs.items():
        assert np.allclose(f3.coeffs[p], c @ c @ c)
    with pytest.raises(ValueError):
        convolution_power(f, 0)


def test_density_power():
    m = finite("z5")
    dens = DensityVector(m, np.array([0, 2.5, 0, 0, 2.5]))
    sq = convolution_power(dens, 2)
    assert np.allclose(sq.values, [2.5, 0, 1.25, 1.25, 0])


# ---------------------------------------------------------------------------
# generating measures


@pytest.mark.parametrize("name,kind", [("sl2f5", "uv"), ("sl2f7", "uvw"), ("z101", "uv"),
                                       ("q8", "random"), ("s3", "random")])
def test_generating_measures_are_symmetric_and_generate(name, kind):
    m = finite(name)
    mu = generating_measure(m, kind, seed=3, size=4)
    assert mu.is_symmetric()
    assert len(m.group.generate(mu.atoms)) == m.order
    assert mu.weights.sum() == pytest.approx(1.0)


def test_generating_measure_errors():
    with pytest.raises(ValueError):
        generating_measure(finite("q8"), "uv")
    with pytest.raises(ValueError):
        generating_measure(finite("sl2f5"), "nope")


# ---------------------------------------------------------------------------
# transfer norms


def test_haar_has_no_gap_to_close():
    for name in ("sl2f5", "q8"):
        rep = transfer_norm(haar(finite(name)))
        assert rep.lam <= 1e-12 and rep.gap > 20
        assert rep.matrix_lam <= 1e-12


def test_z101_norm_and_top_eigenvalue():
    m, mu = lazy_z101()
    rep = transfer_norm(mu)
    # characters: mu^(k) = cos(2 pi k / 101); the norm comes from k = 50, the top eigenvalue from k = 1
    chars = np.cos(2 * np.pi * np.arange(1, 101) / 101)
    assert rep.lam == pytest.approx(np.abs(chars).max(), abs=1e-12)
    assert rep.lam == pytest.approx(math.cos(math.pi / 101), abs=1e-10)
    assert rep.lam_top == pytest.approx(math.cos(2 * math.pi / 101), abs=1e-10)
    assert rep.matrix_lam == pytest.approx(rep.lam, abs=1e-9)
    assert rep.matrix_lam_top == pytest.approx(rep.lam_top, abs=1e-9)
    assert rep.exact and rep.note == ""


@pytest.mark.parametrize("name", FINITE)
def test_catalog_norm_matches_dense_transfer_matrix(name):
    m = finite(name)
    rng = np.random.default_rng(4)
    atoms = rng.choice(m.order, min(4, m.order), replace=False)
    mu = AtomicMeasure(m, atoms, rng.random(len(atoms)) + 0.1)
    rep = transfer_norm(mu)
    # independent oracle: SVD of the mean-zero restriction built from the group table
    T = np.zeros((m.order, m.order))
    x = np.arange(m.order)
    for a, w in zip(mu.atoms, mu.weights):
        T[x, m.multiply(m.group.inv[a], x)] += w
    n = m.order
    Q = np.eye(n) - np.full((n, n), 1 / n)
    assert rep.lam == pytest.approx(np.linalg.norm(Q @ T @ Q, 2), abs=1e-9)
    assert np.allclose(transfer_matrix(mu).toarray(), T)


def test_symmetric_measure_has_hermitian_coefficients():
    m = finite("sl2f7")
    mu = generating_measure(m, "uvw")
    for p in enumerate_irreps(m, 100):
        F = fourier_coeff(mu, p)
        assert np.abs(F - F.conj().T).max() <= 1e-12


def test_transfer_norm_bands_and_errors():
    m = finite("sl2f5")
    mu = generating_measure(m, "uv")
    full = transfer_norm(mu)
    assert transfer_norm(mu, include_trivial=True).lam == pytest.approx(1.0)
    hi = transfer_norm(mu, band=(4, math.inf))
    assert hi.lam <= full.lam + 1e-15
    assert all(p.dim >= 4 for p in enumerate_irreps(m, 100) if str(p) in hi.per_irrep)
    with pytest.raises(ValueError):
        transfer_norm(mu, band=(5, 2))
    with pytest.raises(ValueError):
        transfer_norm(mu, band=(50, 60))
    with pytest.raises(ValueError):
        transfer_norm(generating_measure(m, "uv").__class__.delta(su2()))


def test_su2_norm_is_flagged_as_lower_bound():
    m = su2()
    mu = AtomicMeasure.uniform(m, np.array([[0.6, 0.8, 0, 0], [0.6, -0.8, 0, 0]]), symmetric=True)
    rep = transfer_norm(mu, band=(1, 11))
    assert not rep.exact and "lower bound" in rep.note
    assert 0 < rep.lam <= 1


@pytest.mark.parametrize("name", ["sl2f5", "sl2f7", "z101"])
def test_gap_is_superadditive_under_powers(name):
    m = finite(name)
    mu = generating_measure(m, "uv")
    base = transfer_norm(mu)
    for l in (2, 3, 4):
        rep = transfer_norm(convolution_power(mu, l), matrix_check=False)
        for key, v in rep.per_irrep.items():
            b = base.per_irrep[key]
            gap_l = math.inf if v <= 0 else -math.log(v)
            gap_1 = math.inf if b <= 0 else -math.log(b)
            assert gap_l >= l * gap_1 - 1e-9


def test_complement_gap_agrees_with_catalog():
    m, mu = lazy_z101()
    assert complement_gap(mu, m.diameter, 0.0) == pytest.approx(math.cos(math.pi / 101), abs=1e-10)
    assert complement_gap(mu, 0.1, 0.0) == 0.0


def test_complement_gap_sparse_path_matches_dense(monkeypatch):
    m = profinite("sl2z2", depth=3)
    for kind in ("uv", "random"):
        mu = generating_measure(m, kind, seed=5, size=6)
        dense = complement_gap(mu, 0.5, 0.0)
        monkeypatch.setattr(walks, "DENSE_MAX_ORDER", 10)
        sparse_val = complement_gap(mu, 0.5, 0.0)
        monkeypatch.undo()
        assert sparse_val == pytest.approx(dense, abs=1e-8)


def test_complement_gap_on_tower_layers():
    # the range of P_{N_2} - P_{N_1} is the sum of isotypic parts of irreps of level 4
    m = profinite("sl2z2", depth=3)
    mu = generating_measure(m, "uv")
    layer = [p for p in enumerate_irreps(m, 100)
             if walks.lp_multiplier(m, tower_ladder(m), 1, p) == 1.0]
    expected = max(float(np.linalg.norm(fourier_coeff(mu, p), 2)) for p in layer)
    assert complement_gap(mu, 0.5, 0.25) == pytest.approx(expected, abs=1e-10)


# ---------------------------------------------------------------------------
# exceptional subspace


def test_exceptional_space_contains_trivial():
    for model, lad in ((su2(), ScaleLadder(0.3, 10.0, 2)),
                       (profinite("sl2z2", depth=3), tower_ladder(profinite("sl2z2", depth=3)))):
        E = exceptional_subspace(model, lad, 1.0, 20, 2.0, 3.0)
        assert any(p.is_trivial for p in E.labels)


def test_tower_exceptional_space_is_top_quotient():
    m = profinite("sl2z2", depth=3)
    lad = tower_ladder(m)
    E = exceptional_subspace(m, lad, 1.0, 100, 1.0, 1.0)
    # oracle: irreps trivial on N_1, found from the representation matrices
    expected = []
    for p in enumerate_irreps(m, 100):
        mats = walks.fourier_coeff(AtomicMeasure.uniform(m, m.congruence_subgroup(1)), p)
        if np.allclose(mats, np.eye(p.dim)):
            expected.append(p)
    assert set(E.labels) == set(expected)
    assert E.dimension == m.indices[1]
    assert E.bound_exact == pytest.approx(2 * m.indices[1])
    assert E.complete and E.dimension <= E.bound_exact


def test_su2_exceptional_dimension_bound():
    m = su2()
    fit = reference_fit(m)
    lad = ScaleLadder(0.3, 10.0, 2)
    E = exceptional_subspace(m, lad, 1.0, 101, fit.C1_hat, 3.0, C0=1.0)
    thresholds = [lad.eta_power(i, 1 / 12) for i in (1, 2)]
    for p in E.labels:
        for i, t in zip((1, 2), thresholds):
            assert abs(walks.lp_multiplier(m, lad, i, p)) < t
    assert E.dimension == sum(p.dim ** 2 for p in E.labels)
    assert E.within_bound and E.dimension <= 2 * fit.C1_hat * lad.eta(1) ** -3
    assert not E.complete and E.catalog_size == 101
    assert E.bound_C0 is not None and E.bound_eta0 == pytest.approx(2 * fit.C1_hat * 0.3 ** -3)


# ---------------------------------------------------------------------------
# flattening


def resolving_ladder(model, eta0, L=1.0):
    d0 = reference_fit(model).d0_hat
    a = math.ceil(max(4 * L * d0, 4 * L + 2)) + 1
    return ScaleLadder(eta0, float(a), 1), d0


def test_haar_flattens_immediately():
    m = profinite("sl2z3", depth=2)
    lad, d0 = resolving_ladder(m, 0.95)
    rep = flattening_ladder(haar(m), lad, L=1, d0=d0)
    assert rep.hypothesis and all(r["l"] == 1 for r in rep.rows)
    assert rep.implication_holds and rep.warnings == []


def test_subgroup_uniform_measure_saturates():
    m = profinite("sl2z3", depth=2)
    lad, d0 = resolving_ladder(m, 0.95)
    N1 = m.congruence_subgroup(1)
    rep = flattening_ladder(AtomicMeasure.uniform(m, N1, symmetric=True), lad, L=1, d0=d0)
    assert not rep.hypothesis
    # mu^(l) stays uniform on N_1: one coset of N_1, and |N_1| cosets of the trivial ball
    assert all(v == 0.0 for v in rep.rows[0]["H2"])
    assert rep.rows[1]["H2"] == pytest.approx([math.log2(len(N1))] * len(rep.rows[1]["H2"]))
    assert rep.rows[1]["h"] == pytest.approx(math.log2(m.order))
    assert rep.rows[0]["l"] is None and rep.rows[1]["l"] is None


@pytest.mark.parametrize("depth", [1, 2])
def test_flattening_implication_on_small_towers(depth):
    m = profinite("sl2z3", depth=depth)
    for kind in ("uv", "uvw", "random"):
        for eta0 in (0.95, 0.99):
            lad, d0 = resolving_ladder(m, eta0)
            rep = flattening_ladder(generating_measure(m, kind), lad, C2=2, L=1, d0=d0)
            assert rep.monotonicity_violations == 0
            assert rep.implication_holds
            assert rep.bound == pytest.approx(1 / (40 * 2 * d0 * lad.a ** 3))


def test_flattening_warns_on_small_ratio_and_rejects_su2():
    m = finite("sl2f5")
    rep = flattening_ladder(generating_measure(m, "uv"), ScaleLadder(0.9, 2.0, 1), L=1, d0=3)
    assert rep.warnings
    with pytest.raises(NotImplementedError):
        flattening_ladder(AtomicMeasure.delta(su2()), ScaleLadder(0.9, 20.0, 1))


def test_flattening_gap_uses_complement_of_exceptional_space():
    m = profinite("sl2z3", depth=2)
    lad, d0 = resolving_ladder(m, 0.95)
    mu = generating_measure(m, "random")
    rep = flattening_ladder(mu, lad, L=1, d0=d0)
    assert rep.lam == pytest.approx(complement_gap(mu, lad.eta(1), lad.eta(2)))
    assert rep.h0_dimension == m.indices[1]


# ---------------------------------------------------------------------------
# scale gap certificates


def test_haar_scale_gap_is_one_step():
    m = finite("sl2f5")
    bands = [p for p in enumerate_irreps(m, 100) if not p.is_trivial]
    rep = scale_gap_certificate(haar(m), [0.1, 0.01], bands=bands)
    assert all(r["l"] == 1 and r["passes"] for r in rep.rows)
    assert rep.all_pass and rep.implied_gap == pytest.approx(0.05 / 4)


def test_z101_scale_gap_least_power():
    m, mu = lazy_z101()
    bands = [p for p in enumerate_irreps(m, 1) if not p.is_trivial]
    etas = [0.1, 1e-3, 1e-6]
    rep = scale_gap_certificate(mu, etas, c=0.1, bands=bands)
    lam = math.cos(math.pi / 101)
    for r, eta in zip(rep.rows, etas):
        assert r["l"] == math.ceil(0.1 * math.log2(1 / eta) / -math.log2(lam))
        assert r["l_cap"] == math.floor(4 * math.log2(1 / eta))
        assert not r["passes"]
    assert rep.implied_gap is None and len(rep.failures) == 3


def test_scale_gap_reports_invariant_band():
    m = finite("sl2f5")
    H = m.group.generate([1])
    mu = AtomicMeasure.uniform(m, H, symmetric=True)
    bands = [p for p in enumerate_irreps(m, 100) if not p.is_trivial]
    rep = scale_gap_certificate(mu, [0.1], bands=bands)
    assert not rep.all_pass
    assert "never contract" in rep.failures[0]
    # the obstruction: mu^(pi) is the projection onto H-fixed vectors, norm 1 when nonzero
    stuck = [str(p) for p in bands if np.linalg.norm(fourier_coeff(mu, p), 2) > 1 - 1e-9]
    assert stuck and rep.rows[0]["limiting_band"] in stuck


def test_scale_gap_rejects_bad_scale():
    m, mu = lazy_z101()
    with pytest.raises(ValueError):
        scale_gap_certificate(mu, [1.5])
