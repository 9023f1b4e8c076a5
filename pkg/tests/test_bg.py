import math

import numpy as np
import pytest

from grouplab.bg import (
    DEFAULTS,
    NO_SIGNAL,
    BGConstants,
    ExtractionFailure,
    dimension_check,
    energy_sandwich,
    entropy_gain,
    equidistribution_check,
    extract_approx_subgroup,
    middle_energy_check,
    tail_partition,
    verify_approx_subgroup,
)
from grouplab.fourier import AtomicMeasure
from grouplab.groups import finite, omega, profinite, su2
from grouplab.scales import smoothed_density

FINITE = ["z5", "z101", "s3", "q8", "sl2f3", "sl2f5", "sl2f7"]
TOWER = profinite("sl2z2", depth=3)


def uniform(model, S):
    return AtomicMeasure.uniform(model, np.asarray(S, dtype=np.int64))


def symmetric_random_set(model, size, seed):
    rng = np.random.default_rng(seed)
    S = rng.choice(model.order, size, replace=False)
    return np.union1d(S, model.inverse(S))


def collision_entropy(model, atoms, weights):
    """Below resolution on a finite group: -log2 of the collision probability."""
    p = np.bincount(np.asarray(atoms), weights=weights, minlength=model.order)
    return -math.log2(float(np.sum(p ** 2)))


def product_law(model, X, Y):
    p = np.zeros(model.order)
    for a, wa in zip(X.atoms, X.weights):
        for b, wb in zip(Y.atoms, Y.weights):
            p[int(model.multiply(a, b))] += wa * wb
    return p


def proper_subgroups(model):
    """A few proper subgroups generated by single elements and pairs."""
    out = {}
    for g in range(1, model.order):
        H = model.group.generate([g])
        if 1 < len(H) < model.order:
            out.setdefault(len(H), H)
    return list(out.values())


# ---------------------------------------------------------------------------
# entropy gain


def test_gain_of_point_masses():
    m = finite("sl2f5")
    d = AtomicMeasure.delta(m)
    rep = entropy_gain(d, d, 0.1)
    assert rep.H_X == rep.H_Y == rep.H_XY == 0.0
    assert rep.raw_log_k == 0.0
    assert rep.log_k == rep.floor == pytest.approx(3 * math.log2(120))
    assert not rep.signal and rep.note == NO_SIGNAL


@pytest.mark.parametrize("name", ["s3", "q8", "sl2f5", "sl2f7"])
def test_gain_on_subgroup_uniform(name):
    m = finite(name)
    for H in proper_subgroups(m):
        X = uniform(m, H)
        rep = entropy_gain(X, X, 0.1)
        # below resolution the entropy of a uniform measure is log2 of its support size
        assert rep.H_X == pytest.approx(math.log2(len(H)), abs=1e-12)
        assert rep.H_XY == pytest.approx(rep.H_X, abs=1e-12)
        assert rep.log_k <= 3 * math.log2(omega(m)) + 1e-12
        assert rep.floor_ok and rep.balance_ok


def test_gain_on_generating_set_of_sl2f5():
    m = finite("sl2f5")
    from grouplab.walks import generating_measure
    X = generating_measure(m, "uv")
    rep = entropy_gain(X, X, 0.1)
    assert rep.H_X == pytest.approx(collision_entropy(m, X.atoms, X.weights), abs=1e-12)
    p2 = product_law(m, X, X)
    assert rep.H_XY == pytest.approx(-math.log2(np.sum(p2 ** 2)), abs=1e-12)
    assert rep.H_XY - rep.H_X >= 0.5


def test_gain_floor_and_balance_on_random_instances():
    rng = np.random.default_rng(0)
    models = [finite(n) for n in FINITE] + [TOWER, profinite("sl2z3", depth=2)]
    for k in range(50):
        m = models[k % len(models)]
        ax = rng.choice(m.order, rng.integers(1, min(m.order, 40) + 1), replace=False)
        ay = rng.choice(m.order, rng.integers(1, min(m.order, 40) + 1), replace=False)
        X = AtomicMeasure(m, ax, rng.random(len(ax)) + 0.05)
        Y = AtomicMeasure(m, ay, rng.random(len(ay)) + 0.05)
        eta = float(rng.choice([0.1, 0.2, 0.3, 0.5]))
        rep = entropy_gain(X, Y, eta)
        assert rep.H_XY >= 0.5 * (rep.H_X + rep.H_Y) - 3 * math.log2(omega(m)) - 1e-9
        assert rep.floor_ok
        assert rep.balance_ok or not rep.signal


def test_gain_runs_on_su2_by_sampling():
    m = su2()
    X = AtomicMeasure.uniform(m, np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]]))
    rep = entropy_gain(X, X, 0.3, budget=64)
    assert np.isfinite(rep.H_XY) and rep.H_XY >= 0


def test_dimension_check_reports_constant():
    out = dimension_check(TOWER, 0.25)
    assert out["C_needed"] >= 1 and out["C_prime"] == 32.0
    assert out["log2_C_needed"] == pytest.approx(math.log2(out["C_needed"]))


# ---------------------------------------------------------------------------
# smoothing lemmas


def test_thickened_densities_compare_across_scales():
    rng = np.random.default_rng(1)
    om = omega(TOWER)
    for _ in range(10):
        atoms = rng.choice(TOWER.order, 30, replace=False)
        mu = AtomicMeasure(TOWER, atoms, rng.random(30) + 0.1)
        for eta in (0.125, 0.25):
            base = math.sqrt(np.mean(smoothed_density(TOWER, mu, eta) ** 2))
            for c in (0.5, 1, 2, 3, 6):
                r = min(c * eta, TOWER.diameter)
                n = math.sqrt(np.mean(smoothed_density(TOWER, mu, r) ** 2))
                assert base / om ** 2 <= n <= base * om ** 2
            for c in (1, 2):
                lo = smoothed_density(TOWER, mu, c * eta)
                hi = smoothed_density(TOWER, mu, min((c + 1) * eta, TOWER.diameter))
                # y in x_eta means y and x share a coset of the eta-ball
                ball = TOWER.ball(eta)
                for x in rng.choice(TOWER.order, 20):
                    ys = TOWER.multiply(x, ball)
                    assert np.all(lo[ys] <= om * hi[x] * (1 + 1e-12))


# ---------------------------------------------------------------------------
# tail partitions


def test_subgroup_uniform_is_all_middle():
    m = finite("sl2f7")
    for H in proper_subgroups(m):
        tp = tail_partition(uniform(m, H), 0.1, omega(m))
        assert set(tp.mid) == set(H.tolist())
        assert len(tp.gt) == 0 and len(tp.lt) == 0
        assert tp.mass_gt == 0 and tp.norm_lt == 0


def test_point_mass_classification_matches_closed_form():
    # on the tower the 0.25-ball is N_2 (index 48) and the 0.5-ball is N_1 (index 6)
    d = AtomicMeasure.delta(TOWER)
    l2sq = 48.0              # ||delta_eta||_2^2 = 1/|1_eta|
    value = 6.0              # delta_{2 eta}(1) = 1/|1_{2 eta}|
    for K in (1.1, 1.2, 1.3, 2.0):
        tp = tail_partition(d, 0.25, K)
        assert tp.l2sq == pytest.approx(l2sq)
        expect_lt = value < K ** -10 * l2sq
        assert (0 in tp.lt) == expect_lt
        assert (0 in tp.mid) == (not expect_lt)
        assert len(tp.gt) == 0


def test_tail_bounds_on_random_instances():
    rng = np.random.default_rng(2)
    models = [finite("sl2f5"), finite("sl2f7"), TOWER, profinite("sl2z3", depth=2)]
    for k in range(50):
        m = models[k % len(models)]
        atoms = rng.choice(m.order, rng.integers(2, 60), replace=False)
        mu = AtomicMeasure(m, atoms, rng.random(len(atoms)) ** 3 + 1e-3)
        eta = float(rng.choice([0.125, 0.25, 0.5]))
        K = 2.0 ** float(rng.uniform(0.1, 3))
        tp = tail_partition(mu, eta, K)
        assert set(tp.gt) | set(tp.lt) | set(tp.mid) == set(tp.centers)
        assert len(tp.gt) + len(tp.lt) + len(tp.mid) == len(tp.centers)
        assert tp.gt_ok and tp.lt_ok


def test_tail_partition_validation():
    with pytest.raises(ValueError):
        tail_partition(AtomicMeasure.delta(TOWER), 0.25, 0.5)
    with pytest.raises(TypeError):
        tail_partition(AtomicMeasure.delta(su2()), 0.25, 2.0)


# ---------------------------------------------------------------------------
# middle energy


def test_middle_energy_on_subgroup():
    m = finite("sl2f7")
    H = max(proper_subgroups(m), key=len)
    X = uniform(m, H)
    rep = middle_energy_check(X, X, 0.1)
    assert rep.passed and not rep.failure
    assert rep.conv_norm >= 10 * rep.conv_bound
    assert rep.energy >= rep.energy_bound
    assert rep.volume_ok


def test_middle_energy_on_point_masses():
    m = finite("sl2f5")
    d = AtomicMeasure.delta(m)
    rep = middle_energy_check(d, d, 0.1)
    # delta * delta = delta, whose density |G| 1_e has L2 norm |G|^(1/2)
    assert rep.conv_norm == pytest.approx(120 ** 0.5)
    assert rep.N_x == rep.N_y == 1 and rep.energy == 1
    assert rep.volume_x == pytest.approx(1 / 120)
    assert rep.passed


def test_middle_energy_reports_empty_middle():
    d = AtomicMeasure.delta(TOWER)
    rep = middle_energy_check(d, d, 0.25, K=1.1)
    assert rep.failure.startswith("middle set of X is empty")
    assert "C(X;<)" in rep.failure and not rep.passed
    with pytest.raises(ExtractionFailure):
        extract_approx_subgroup(d, d, 0.25, K=1.1)


def test_energy_sandwich_on_random_subsets():
    rng = np.random.default_rng(3)
    models = [finite("sl2f5"), finite("sl2f7"), TOWER, profinite("sl2z3", depth=2)]
    for k in range(50):
        m = models[k % len(models)]
        A = rng.choice(m.order, rng.integers(1, 25), replace=False)
        B = rng.choice(m.order, rng.integers(1, 25), replace=False)
        eta = float(rng.choice([0.125, 0.25, 0.5]))
        out = energy_sandwich(m, A, B, eta)
        assert out["ok"], out


# ---------------------------------------------------------------------------
# approximate subgroups


@pytest.mark.parametrize("name", FINITE)
def test_subgroups_verify_with_one_translate(name):
    m = finite(name)
    for H in proper_subgroups(m) + [m.elements()]:
        res = verify_approx_subgroup(m, H, 0.1)
        assert res.ok and res.K_verified == 1


def test_interval_needs_two_translates():
    m = finite("z101")
    for mm in (2, 5, 9):
        H = np.arange(-mm, mm + 1) % 101
        res = verify_approx_subgroup(m, H, 0.1)
        assert res.K_verified == 2
        # direct check: the two translates cover H + H = [-2m, 2m]
        HH = {(a + b) % 101 for a in H for b in H}
        covered = {(int(t) + h) % 101 for t in res.T for h in H}
        assert HH <= covered and len(HH) > len(H)


def test_random_set_is_far_from_a_subgroup():
    m = finite("sl2f7")
    S = symmetric_random_set(m, 40, 0)
    res = verify_approx_subgroup(m, S, 0.1)
    assert res.K_verified > 10
    capped = verify_approx_subgroup(m, S, 0.1, K_max=5)
    assert not capped.ok and "K_max" in capped.reason


def test_asymmetric_set_names_witness():
    m = finite("z101")
    res = verify_approx_subgroup(m, [0, 1, 2], 0.1)
    assert not res.ok and res.witness == 1 and res.K_verified is None
    with pytest.raises(ValueError):
        verify_approx_subgroup(m, [], 0.1)


def test_equidistribution_trivial_cases():
    m = finite("sl2f5")
    H = max(proper_subgroups(m), key=len)
    X = uniform(m, H)
    rep = equidistribution_check(X, H, 0, 0.1, 2.0)
    assert rep.prob_x == pytest.approx(1.0)
    assert rep.ok
    g = next(int(g) for g in range(m.order) if g not in set(H.tolist()))
    far = equidistribution_check(AtomicMeasure.delta(m, g), H, 0, 0.1, 2.0)
    assert far.prob_x == 0.0 and not far.ok


def test_equidistribution_on_random_large_sets():
    m = finite("sl2f5")
    for seed in range(20):
        S = symmetric_random_set(m, 60, seed)
        X = AtomicMeasure.uniform(m, S, symmetric=True)
        cand = extract_approx_subgroup(X, X, 0.1)
        eq = cand.equidistribution
        K = 2.0 ** cand.log_k
        assert eq.prob_x >= K ** -DEFAULTS.c_eq and eq.prob_y >= K ** -DEFAULTS.c_eq
        assert eq.ok


@pytest.mark.parametrize("name", FINITE)
def test_subgroup_fixed_point(name):
    m = finite(name)
    om = omega(m)
    for H in proper_subgroups(m):
        X = uniform(m, H)
        cand = extract_approx_subgroup(X, X, 0.1)
        assert np.array_equal(np.sort(cand.H), np.sort(H))
        assert cand.K_verified == 1
        assert abs(cand.entropy - cand.H2_X) <= math.log2(om)
        assert cand.x in set(H.tolist()) and cand.y in set(H.tolist())
        assert cand.passed


def test_interval_candidate():
    m = finite("z101")
    H = np.arange(-5, 6) % 101
    X = AtomicMeasure.uniform(m, H, symmetric=True)
    cand = extract_approx_subgroup(X, X, 0.1)
    triple = {(a + b + c) % 101 for a in H for b in H for c in H}
    assert set(cand.H.tolist()) <= triple
    assert cand.K_verified <= 8


@pytest.mark.parametrize("name", ["s3", "sl2f5", "sl2f7"])
def test_haar_candidate_covers_group(name):
    m = finite(name)
    X = AtomicMeasure.uniform(m, m.elements(), symmetric=True)
    cand = extract_approx_subgroup(X, X, 0.1)
    assert len(cand.H) == m.order
    assert abs(cand.entropy - math.log2(m.order)) <= math.log2(omega(m))


def test_constants_are_reported():
    m = finite("q8")
    X = uniform(m, m.group.generate([1]))
    custom = BGConstants(c_eq=4.0)
    cand = extract_approx_subgroup(X, X, 0.1, constants=custom)
    assert cand.constants.c_eq == 4.0
    assert cand.equidistribution.bound == pytest.approx((2.0 ** cand.log_k) ** -4.0)
    d = cand.as_dict()
    assert d["K_verified"] == 1 and d["passed"]
