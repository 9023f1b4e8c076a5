"""Nets, metric entropy, scaled densities and energies.

Sets on finite, profinite and quotient models are integer index arrays and
every quantity is computed exactly.  On SU(2) sets are finite point clouds
(quaternion arrays); volumes of thickenings are then estimated by seeded Monte
Carlo with a reported standard error, and ball-overlap volumes are computed
by one-dimensional quadrature.

Logarithms are base 2 throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.spatial import cKDTree

from .fourier import DensityVector
from .groups import (
    GroupModel,
    ProfiniteModel,
    SU2Model,
    _IndexModel,
    omega,
    quat_mul,
)

__all__ = [
    "Net",
    "ScaledEntropy",
    "DensityProfile",
    "EnergyReport",
    "pairwise_distance",
    "ball_indices",
    "thicken",
    "build_net",
    "metric_entropy",
    "comparability_report",
    "thickened_density",
    "scaled_l2_norm",
    "renyi_entropy",
    "chi_density",
    "density_points",
    "energy",
    "quadruple_count",
    "approx_energy",
    "product_coverage_check",
    "su2_lens_volume",
    "su2_overlap_kernel",
    "set_product",
]

#: pair budget for approximate energies
PAIR_BUDGET = 10 ** 6


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

@dataclass
class Net:
    """A greedy ``eta``-separated subset.

    Attributes
    ----------
    eta : float
    centers : element batch
    source : str
    maximal : bool
        True when every candidate of the pool is within ``eta`` of a center.
    """

    eta: float
    centers: object
    source: str = ""
    maximal: bool = True

    def __len__(self):
        return len(self.centers)


@dataclass
class ScaledEntropy:
    eta: float
    N: int
    h: float


@dataclass
class DensityProfile:
    eta: float
    rho: float
    tau: float
    centers: np.ndarray
    high: np.ndarray
    vol_closure: float
    vol_high_rho: float

    @property
    def ratio(self) -> float:
        return self.vol_closure / self.vol_high_rho if self.vol_high_rho > 0 else math.inf


@dataclass
class EnergyReport:
    eta: float
    exact: Optional[float]
    approx: int
    quadruples: int
    omega: float
    cover_size: int = 0

    def as_dict(self):
        return dict(self.__dict__)


# ---------------------------------------------------------------------------
# elementary geometry
# ---------------------------------------------------------------------------

def pairwise_distance(model: GroupModel, X, Y) -> np.ndarray:
    """Matrix of distances ``d(X[i], Y[j])``."""
    if isinstance(model, SU2Model):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        c = np.clip(X @ Y.T, -1.0, 1.0)
        # stable angle between unit vectors: 2 atan2(|x-y|, |x+y|)
        return 2.0 * np.arctan2(np.sqrt(np.maximum(2 - 2 * c, 0)), np.sqrt(np.maximum(2 + 2 * c, 0)))
    if isinstance(model, _IndexModel):
        X = np.asarray(X, dtype=np.int64)
        Y = np.asarray(Y, dtype=np.int64)
        g = model.multiply(X[:, None], model.inverse(Y)[None, :])
        return model.dist_to_identity()[g]
    X = np.asarray(X)
    Y = np.asarray(Y)
    return np.asarray(model.distance(X[:, None], Y[None, :]))


def ball_indices(model: _IndexModel, eta: float) -> np.ndarray:
    """Elements of the open ball ``1_eta``."""
    return np.flatnonzero(model.dist_to_identity() < eta)


def set_product(model: _IndexModel, A, B) -> np.ndarray:
    """Product set ``A B`` as a sorted index array."""
    A = np.unique(np.asarray(A, dtype=np.int64))
    B = np.unique(np.asarray(B, dtype=np.int64))
    mask = np.zeros(model.order, dtype=bool)
    step = max(1, 2_000_000 // max(len(B), 1))
    for s in range(0, len(A), step):
        mask[model.multiply(A[s:s + step, None], B[None, :]).ravel()] = True
    return np.flatnonzero(mask)


def thicken(model: _IndexModel, A, eta: float) -> np.ndarray:
    """``A_eta``: union of the open balls ``x_eta`` for ``x`` in ``A``."""
    return set_product(model, A, ball_indices(model, eta))


def _volume(model: _IndexModel, S) -> float:
    return len(S) / model.order


# ---------------------------------------------------------------------------
# nets and entropy
# ---------------------------------------------------------------------------

def _greedy_index(model: _IndexModel, A, eta):
    ball = ball_indices(model, eta)
    covered = np.zeros(model.order, dtype=bool)
    centers = []
    for x in np.asarray(A, dtype=np.int64):
        if covered[x]:
            continue
        centers.append(x)
        covered[model.multiply(x, ball)] = True
    return np.asarray(centers, dtype=np.int64)


def _greedy_points(model, P, eta):
    P = np.asarray(P, dtype=float)
    centers = np.empty((0,) + P.shape[1:])
    block = 4096
    i = 0
    accepted = []
    while i < len(P):
        chunk = P[i:i + block]
        if len(accepted):
            C = np.asarray(accepted)
            dmin = pairwise_distance(model, chunk, C).min(axis=1)
            cand = np.flatnonzero(dmin >= eta)
        else:
            cand = np.arange(len(chunk))
        # sequential pass over the surviving candidates of this chunk
        local = []
        for k in cand:
            p = chunk[k]
            if local:
                d = pairwise_distance(model, p[None], np.asarray(local))[0]
                if np.min(d) < eta:
                    continue
            local.append(p)
        accepted.extend(local)
        i += block
    if accepted:
        centers = np.asarray(accepted)
    return centers


def build_net(model: GroupModel, points=None, eta: float = 0.1, seed: int = 0,
              pool: int = 100_000) -> Net:
    """Greedy maximal ``eta``-separated subset.

    Points are scanned in input order; a point is accepted when it is at
    distance at least ``eta`` from every accepted center.  When ``points`` is
    None a Haar pool of size ``pool`` drawn with ``seed`` is used.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    source = "input"
    if points is None:
        points = model.haar_sample(seed, pool)
        source = f"haar pool n={pool} seed={seed}"
    if len(points) == 0:
        raise ValueError("cannot build a net of an empty set")
    if isinstance(model, _IndexModel):
        centers = _greedy_index(model, points, eta)
    else:
        centers = _greedy_points(model, points, eta)
    return Net(eta, centers, source, True)


def metric_entropy(model: GroupModel, A, eta: float) -> ScaledEntropy:
    """``h(A; eta) = log2 N_eta(A)`` with ``N_eta`` the size of a greedy cover."""
    net = build_net(model, A, eta)
    N = len(net)
    return ScaledEntropy(eta, N, math.log2(N))


def _mc_union_volume(model: SU2Model, centers, eta, n, seed):
    """Haar volume of a union of balls by importance sampling.

    A center is drawn uniformly, then a point uniformly in its ball; the
    estimator ``#centers |1_eta| / multiplicity(point)`` is unbiased.
    """
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers)
    k = rng.integers(0, len(centers), size=n)
    pts = quat_mul(centers[k], _su2_ball_sample(eta, n, rng))
    mult = np.zeros(n)
    for s in range(0, len(centers), 512):
        mult += (pairwise_distance(model, pts, centers[s:s + 512]) < eta).sum(axis=1)
    est = len(centers) * model.ball_volume(eta) / mult
    return float(est.mean()), float(est.std(ddof=1) / math.sqrt(n))


def _su2_ball_sample(eta, n, rng):
    """Haar-uniform points of ``1_eta``: angle with density ``sin^2``, uniform axis."""
    grid = np.linspace(0.0, eta, 4097)
    cdf = (grid - np.sin(grid) * np.cos(grid))
    cdf = cdf / cdf[-1]
    theta = np.interp(rng.random(n), cdf, grid)
    axis = rng.standard_normal((n, 3))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    return np.concatenate([np.cos(theta)[:, None], np.sin(theta)[:, None] * axis], axis=1)


def comparability_report(model: GroupModel, A, eta: float, samples: int = 200_000,
                         seed: int = 0) -> dict:
    """The four comparable quantities of a set at scale ``eta``.

    Returns ``|A_bar|/|1_eta|``, ``|A_eta|/|1_eta|``, ``N_eta(A)``, ``#A*``
    (with ``A*`` the greedy net and ``A_bar = (A*)_eta``), the largest
    pairwise ratio and ``Omega``.  On SU(2) the first two are Monte Carlo
    estimates with standard errors.
    """
    net = build_net(model, A, eta)
    n_star = len(net)
    N = n_star
    vol = model.ball_volume(eta)
    out = {"eta": eta, "omega": omega(model)}
    if isinstance(model, _IndexModel):
        closure = _volume(model, thicken(model, net.centers, eta)) / vol
        thick = _volume(model, thicken(model, A, eta)) / vol
        out["stderr"] = [0.0, 0.0]
    else:
        c, ce = _mc_union_volume(model, net.centers, eta, samples, seed)
        t, te = _mc_union_volume(model, A, eta, samples, seed + 1)
        closure, thick = c / vol, t / vol
        out["stderr"] = [ce / vol, te / vol]
    q = [closure, thick, float(N), float(n_star)]
    out["quantities"] = q
    out["max_ratio"] = max(a / b for a in q for b in q)
    return out


# ---------------------------------------------------------------------------
# scaled densities and entropies
# ---------------------------------------------------------------------------

def su2_lens_volume(t: float, eta: float) -> float:
    """Haar volume of ``1_eta ∩ g 1_eta`` for ``d(1, g) = t``.

    Points of ``1_eta`` at angle ``theta`` from the identity have a uniform
    axis, and the condition ``d(y, g) < eta`` becomes a linear condition on the
    cosine ``u`` between the two axes; integrating its probability against
    the Haar angle density ``(2/pi) sin^2`` gives the overlap.
    """
    if t >= 2 * eta:
        return 0.0
    if t <= 0:
        return (eta - math.sin(eta) * math.cos(eta)) / math.pi
    ce, ct, st = math.cos(eta), math.cos(t), math.sin(t)

    def prob(theta):
        s = math.sin(theta)
        if s == 0:
            return 1.0 if math.cos(theta) * ct > ce else 0.0
        u_star = (ce - math.cos(theta) * ct) / (s * st)
        return min(max((1.0 - u_star) / 2.0, 0.0), 1.0)

    lo = max(0.0, t - eta)
    val, _ = integrate.quad(lambda th: (2 / math.pi) * math.sin(th) ** 2 * prob(th), lo, eta,
                            epsabs=1e-14, epsrel=1e-12, limit=400)
    return val


@lru_cache(maxsize=64)
def _su2_kernel_grid(eta: float, n: int = 513):
    t = np.linspace(0.0, 2 * eta, n)
    vol = (eta - math.sin(eta) * math.cos(eta)) / math.pi
    k = np.array([su2_lens_volume(x, eta) for x in t]) / vol ** 2
    return t, k


def su2_overlap_kernel(eta: float, t) -> np.ndarray:
    """``K_eta(t) = |1_eta ∩ g 1_eta| / |1_eta|^2`` interpolated on a 513-point grid."""
    grid, k = _su2_kernel_grid(float(eta))
    return np.interp(np.asarray(t, dtype=float), grid, k, right=0.0)


def _as_finite_weights(model: _IndexModel, mu) -> np.ndarray:
    if isinstance(mu, DensityVector):
        return np.asarray(mu.values, dtype=float) / model.order
    vals = np.zeros(model.order)
    np.add.at(vals, np.asarray(mu.atoms), mu.weights)
    return vals


def smoothed_density(model: _IndexModel, mu, eta: float) -> np.ndarray:
    """``mu_eta(x) = mu(x_eta) / |1_eta|`` for every element ``x``."""
    w = _as_finite_weights(model, mu)
    ids = _coset_ids(model, eta)
    mass = np.bincount(ids, weights=w, minlength=model.order)
    return mass[ids] / model.ball_volume(eta)


def thickened_density(mu, eta: float, x) -> float:
    """``mu_eta(x) = mu(x_eta) / |1_eta|`` summed exactly over the atoms."""
    model = mu.model
    if isinstance(mu, DensityVector):
        return float(smoothed_density(model, mu, eta)[int(x)])
    d = np.asarray(model.distance(mu.atoms, _broadcast_like(model, x)))
    return float(mu.weights[d < eta].sum() / model.ball_volume(eta))


def _broadcast_like(model, x):
    return np.asarray(x)


def scaled_l2_norm(mu, eta: float, block: int = 2048) -> float:
    """``||mu_eta||_2^2`` for a probability measure.

    Computed as ``sum_{i,j} w_i w_j K_eta(d(x_i, x_j))``.  Subgroup-ball
    models use the exact kernel ``1_{t < eta} / |1_eta|`` (equivalently the
    exact smoothed density); SU(2) uses the interpolated overlap kernel.
    """
    model = mu.model
    if isinstance(model, _IndexModel):
        dens = smoothed_density(model, mu, eta)
        return float(np.mean(dens ** 2))
    X = np.asarray(mu.atoms)
    w = mu.weights
    total = 0.0
    for s in range(0, len(w), block):
        D = pairwise_distance(model, X[s:s + block], X)
        total += float(w[s:s + block] @ su2_overlap_kernel(eta, D) @ w)
    return total


def renyi_entropy(mu, eta: float) -> float:
    """``H_2(mu; eta) = log2(1/|1_eta|) - log2 ||mu_eta||_2^2``.

    Values within ``1e-9`` below zero are clamped to zero.
    """
    model = mu.model
    val = math.log2(1.0 / model.ball_volume(eta)) - math.log2(scaled_l2_norm(mu, eta))
    if -1e-9 < val < 0:
        return 0.0
    return val


def chi_density(model: _IndexModel, A, eta: float, x=None) -> np.ndarray:
    """``chi_{A,eta}(x) = |A ∩ x_eta| / (|A| |1_eta|)``.

    Returns the full vector over the group when ``x`` is None.
    """
    A = np.unique(np.asarray(A, dtype=np.int64))
    if len(A) == 0:
        raise ValueError("chi is undefined for an empty set")
    ind = np.zeros(model.order)
    ind[A] = 1.0
    ball = ball_indices(model, eta)
    pts = np.arange(model.order)
    count = np.zeros(model.order)
    for b in ball:
        count += ind[model.multiply(pts, b)]
    vals = (count / model.order) / (_volume(model, A) * _volume(model, ball))
    return vals if x is None else float(vals[int(x)])


def density_points(model: _IndexModel, A, eta: float, rho: float,
                   tau: Optional[float] = None) -> DensityProfile:
    """High-density net points.

    ``A*`` is the greedy ``eta``-net of ``A``, ``A_bar = (A*)_eta`` and
    ``A_high = {x in A* : chi_{A_bar, 3 rho}(x) > tau}``; the default threshold
    is ``Omega**-3``.
    """
    if not (0 < eta < rho < 1):
        raise ValueError("need 0 < eta < rho < 1")
    if tau is None:
        tau = omega(model) ** -3
    net = build_net(model, A, eta)
    if len(net) == 0:
        raise ValueError("empty net")
    closure = thicken(model, net.centers, eta)
    chi = chi_density(model, closure, 3 * rho)
    high = net.centers[chi[net.centers] > tau]
    vol_high = _volume(model, thicken(model, high, rho)) if len(high) else 0.0
    return DensityProfile(eta, rho, tau, net.centers, high, _volume(model, closure), vol_high)


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------

def energy(model: _IndexModel, A, B) -> float:
    """``E(A, B) = ||1_A * 1_B||_2^2`` on a finite model."""
    if not isinstance(model, _IndexModel):
        raise TypeError("exact energy needs a finite model; use approx_energy")
    from .fourier import convolve

    fA = DensityVector.indicator(model, A)
    fB = DensityVector.indicator(model, B)
    c = convolve(fA, fB)
    return float(np.mean(c.values ** 2))


def quadruple_count(model: _IndexModel, A, B) -> int:
    """``#Q(A, B) = #{(a, b, a', b') : ab = a'b'}``."""
    A = np.unique(np.asarray(A, dtype=np.int64))
    B = np.unique(np.asarray(B, dtype=np.int64))
    prod = model.multiply(A[:, None], B[None, :]).ravel()
    r = np.bincount(prod, minlength=model.order)
    return int(np.sum(r.astype(np.int64) ** 2))


def approx_energy(model: GroupModel, A, B, eta: float) -> EnergyReport:
    """``E_eta(A, B) = N_eta(Q_eta(A, B))`` in the sum metric on ``G^4``.

    ``Q_eta`` holds the quadruples with ``d(ab, a'b') < eta``.  When ``A`` and
    ``B`` are themselves ``eta``-separated, distinct quadruples are at least
    ``eta`` apart in the sum metric and the cover size equals the quadruple
    count; otherwise a greedy cover is computed.
    """
    nA, nB = len(A), len(B)
    if nA * nB > PAIR_BUDGET:
        raise ValueError(
            f"{nA * nB} pairs exceed the budget {PAIR_BUDGET}; subsample A and B to nets first"
        )
    ia, ib = np.meshgrid(np.arange(nA), np.arange(nB), indexing="ij")
    ia, ib = ia.ravel(), ib.ravel()
    if isinstance(model, _IndexModel):
        A = np.asarray(A, dtype=np.int64)
        B = np.asarray(B, dtype=np.int64)
        prods = model.multiply(A[ia], B[ib])
    else:
        prods = model.multiply(np.asarray(A)[ia], np.asarray(B)[ib])
    sepA = _is_separated(model, A, eta)
    sepB = _is_separated(model, B, eta)
    if isinstance(model, _IndexModel) and sepA and sepB:
        # balls are subgroups: d(x, y) < eta iff x, y share a coset of 1_eta
        r = np.bincount(_coset_ids(model, eta)[prods])
        count = int(np.sum(r.astype(np.int64) ** 2))
        return EnergyReport(eta, energy(model, A, B), count, count, omega(model), count)
    # quadruples (p, q) of pair indices with d(prod_p, prod_q) < eta
    pairs_p, pairs_q = [], []
    block = max(1, 4_000_000 // len(ia))
    for s in range(0, len(ia), block):
        D = pairwise_distance(model, prods[s:s + block], prods)
        p, q = np.nonzero(D < eta)
        pairs_p.append(p + s)
        pairs_q.append(q)
    P = np.concatenate(pairs_p)
    Qd = np.concatenate(pairs_q)
    count = len(P)
    if sepA and sepB:
        cover = count
    else:
        cover = _greedy_quadruple_cover(model, A, B, ia, ib, P, Qd, eta)
    exact = energy(model, A, B) if isinstance(model, _IndexModel) else None
    return EnergyReport(eta, exact, int(cover), int(count), omega(model), int(cover))


def _coset_ids(model: _IndexModel, eta: float) -> np.ndarray:
    """Label of the coset ``x 1_eta`` for every ``x``.

    Towers use the residue at the ball's level; other models label a coset
    by its smallest member index.
    """
    if isinstance(model, ProfiniteModel):
        return model.proj[model.level_of_radius(eta)]
    ball = ball_indices(model, eta)
    x = np.arange(model.order)
    ids = x.copy()
    for b in ball:
        ids = np.minimum(ids, model.multiply(x, b))
    return ids


def _is_separated(model, S, eta) -> bool:
    if len(S) < 2:
        return True
    D = pairwise_distance(model, S, S)
    np.fill_diagonal(D, np.inf)
    return bool(D.min() >= eta)


def _greedy_quadruple_cover(model, A, B, ia, ib, P, Qd, eta) -> int:
    """Sequential greedy cover of ``Q_eta`` by ``d+`` balls of radius ``eta``.

    Quadruples are scanned in order; each uncovered one becomes a center and
    marks every quadruple of ``Q_eta`` within ``d+ < eta``.  Those neighbours
    are enumerated coordinate by coordinate with the partial sum of distances
    kept below ``eta``, then located in ``Q_eta`` by their integer codes, so a
    step costs the size of the ``d+`` ball rather than ``#Q_eta``.
    """
    DA = pairwise_distance(model, A, A)
    DB = pairwise_distance(model, B, B)
    nA, nB = len(A), len(B)
    quads = np.stack([ia[P], ib[P], ia[Qd], ib[Qd]], axis=1).astype(np.int64)
    sizes = (nA, nB, nA, nB)
    dists = (DA, DB, DA, DB)

    def encode(q):
        code = q[:, 0]
        for c in range(1, 4):
            code = code * sizes[c] + q[:, c]
        return code

    codes = encode(quads)
    order = np.argsort(codes)
    sorted_codes = codes[order]
    covered = np.zeros(len(quads), dtype=bool)
    n = 0
    for k in range(len(quads)):
        if covered[k]:
            continue
        n += 1
        cand = np.zeros((1, 0), dtype=np.int64)
        partial = np.zeros(1)
        for c in range(4):
            row = dists[c][quads[k, c]]
            s = partial[:, None] + row[None, :]
            keep_i, keep_j = np.nonzero(s < eta)
            cand = np.column_stack([cand[keep_i], keep_j])
            partial = s[keep_i, keep_j]
        code = encode(cand)
        pos = np.searchsorted(sorted_codes, code)
        pos = np.minimum(pos, len(sorted_codes) - 1)
        hit = sorted_codes[pos] == code
        covered[order[pos[hit]]] = True
    return n


def product_coverage_check(model: GroupModel, A, B, eta: float, eps: float,
                           samples: int = 2000, seed: int = 0) -> dict:
    """Test ``A_eta B_eta B_eta^{-1} A_eta^{-1} ⊇ 1_{eta^eps}``.

    Finite models: exact product-set computation and membership of every
    element of the ball.  SU(2): points of ``1_{eta^eps}`` are sampled and a
    point counts as covered when some product of net points
    ``a b b'^{-1} a'^{-1}`` lies within ``eta`` of it (perturbing one factor by
    less than ``eta`` reaches it); the verdict is then only a failure to find
    a counterexample.
    """
    radius = eta ** eps
    if isinstance(model, _IndexModel):
        Ae = thicken(model, A, eta)
        Be = thicken(model, B, eta)
        S = set_product(model, set_product(model, Ae, Be), model.inverse(Be))
        S = set_product(model, S, model.inverse(Ae))
        ball = ball_indices(model, radius)
        inside = np.isin(ball, S)
        missing = ball[~inside]
        return {
            "covered": bool(inside.all()),
            "exact": True,
            "radius": radius,
            "witness": None if inside.all() else int(missing[0]),
            "product_size": int(len(S)),
        }
    A = np.asarray(A)
    B = np.asarray(B)
    if len(A) * len(B) > PAIR_BUDGET:
        raise ValueError(f"{len(A) * len(B)} pairs exceed the budget {PAIR_BUDGET}; use coarser nets")
    rng = np.random.default_rng(seed)
    z = _su2_ball_sample(radius, samples, rng)
    ia, ib = np.meshgrid(np.arange(len(A)), np.arange(len(B)), indexing="ij")
    AB = quat_mul(A[ia.ravel()], B[ib.ravel()])
    # z is within eta of (ab)(a'b')^{-1} iff z a'b' is within eta of ab; search
    # the products z q for q in AB against a KD-tree of AB in chordal distance
    tree = cKDTree(AB)
    chord = 2.0 * math.sin(eta / 2.0)
    order = rng.permutation(len(AB))
    covered = np.zeros(samples, dtype=bool)
    for i in range(samples):
        for s in range(0, len(AB), 4096):
            q = AB[order[s:s + 4096]]
            d, _ = tree.query(quat_mul(z[i][None, :], q), k=1, distance_upper_bound=chord)
            if np.any(d < chord):
                covered[i] = True
                break
    bad = np.flatnonzero(~covered)
    return {
        "covered": not len(bad),
        "exact": False,
        "radius": radius,
        "verdict": "no counterexample found" if not len(bad) else "gap point found",
        "witness": None if not len(bad) else [float(v) for v in z[bad[0]]],
    }
