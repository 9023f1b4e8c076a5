"""Multi-scale Bourgain-Gamburd diagnostics.

Given independent random elements ``X ~ mu`` and ``Y ~ nu`` this module
measures the entropy gain of ``XY`` at a scale ``eta``, splits the smoothed
densities into tails and a middle part, checks the energy bounds for the
middle nets, and produces a candidate approximate subgroup ``H`` together
with certificates for the three structural conclusions (approximate
structure, metric entropy, almost equidistribution).

The implicit ``K^{O(1)}`` and ``Omega^{O(1)}`` constants of the theory are
replaced by the exponents in :class:`BGConstants`; every report records the
values it was checked with and the measured margins.  The approximate
subgroup is not produced by a BSG-type argument: the candidate is the
symmetrized popular difference set of the middle net and is then verified
directly ("candidate + certificate").

Entropies are in bits, so ``log K`` is ``log2 K``.  Everything except
:func:`entropy_gain` needs a model whose balls are normal subgroups
(finite groups, towers and their quotients), where all densities, tails and
probabilities are computed exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .fourier import DensityVector, convolve
from .groups import GroupModel, _IndexModel, ball_volume, omega, reference_fit
from .scales import (
    _as_finite_weights,
    _coset_ids,
    _greedy_index,
    approx_energy,
    energy,
    metric_entropy,
    renyi_entropy,
    set_product,
    smoothed_density,
    thicken,
)

__all__ = [
    "BGConstants",
    "DEFAULTS",
    "EntropyGainReport",
    "TailPartition",
    "MiddleEnergyReport",
    "VerificationResult",
    "EquidistributionReport",
    "ApproxGroupCandidate",
    "ExtractionFailure",
    "NO_SIGNAL",
    "entropy_gain",
    "tail_partition",
    "middle_energy_check",
    "extract_approx_subgroup",
    "verify_approx_subgroup",
    "equidistribution_check",
    "energy_sandwich",
    "dimension_check",
]

NO_SIGNAL = "no structural signal at this scale"


@dataclass(frozen=True)
class BGConstants:
    """Declared constants standing in for the ``O(1)`` exponents.

    Attributes
    ----------
    omega_power : float
        Power of ``Omega`` allowed in every ``≼`` comparison; also sets the
        floor ``log K >= omega_power * log2(Omega)``.
    c_pop : float
        Popularity threshold ``theta = K**-c_pop``.
    c_eq : float
        Equidistribution lower bounds are ``K**-c_eq``.
    c_energy : float
        Middle-net energy lower bound ``K**-c_energy N^{3/2} N^{3/2}``.
    c_approx : float
        A candidate passes when it is a ``K**c_approx``-approximate subgroup.
    entropy_multiple : float
        ``|h(H; eta) - H_2(X; eta)| <= entropy_multiple * log K``.
    c_hat : float
        ``C_hat = Omega**c_hat`` in the popular-point threshold.
    C_prime : float
        Dimension condition is examined on ``[eta / C_prime, C_prime eta]``.
    """

    omega_power: float = 3.0
    c_pop: float = 3.0
    c_eq: float = 6.0
    c_energy: float = 6.0
    c_approx: float = 3.0
    entropy_multiple: float = 1.0
    c_hat: float = -3.0
    C_prime: float = 32.0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


DEFAULTS = BGConstants()


def _require_index(model, what: str):
    if not isinstance(model, _IndexModel):
        raise TypeError(f"{what} needs a finite, tower or quotient model (got {model.name})")


def _weights(mu) -> np.ndarray:
    return _as_finite_weights(mu.model, mu)


def _l2sq(dens: np.ndarray) -> float:
    return float(np.mean(dens ** 2))


# ---------------------------------------------------------------------------
# entropy gain


@dataclass
class EntropyGainReport:
    """Rényi entropies of ``X``, ``Y`` and ``XY`` at one scale, and ``log K``."""

    eta: float
    H_X: float
    H_Y: float
    H_XY: float
    raw_log_k: float
    log_k: float
    floor: float
    omega: float
    signal: bool
    floor_ok: bool
    balance_lhs: float
    balance_rhs: float
    balance_ok: bool
    note: str = ""

    @property
    def K(self) -> float:
        return 2.0 ** self.log_k

    def as_dict(self) -> dict:
        return {
            "eta": self.eta,
            "H2_X": self.H_X,
            "H2_Y": self.H_Y,
            "H2_XY": self.H_XY,
            "raw_log_K": self.raw_log_k,
            "log_K": self.log_k,
            "log_K_floor": self.floor,
            "omega": self.omega,
            "signal": self.signal,
            "gain_floor_ok": self.floor_ok,
            "gain_floor_margin": self.floor - self.raw_log_k,
            "balance": {"lhs": self.balance_lhs, "rhs": self.balance_rhs,
                        "ok": self.balance_ok, "margin": self.balance_rhs - self.balance_lhs},
            "note": self.note,
        }


def entropy_gain(X, Y, eta: float, constants: BGConstants = DEFAULTS,
                 budget: Optional[int] = None, seed: int = 0) -> EntropyGainReport:
    """Measure ``log K = (H_2(X) + H_2(Y))/2 - H_2(XY)`` at scale ``eta``.

    The raw value is clamped below at ``omega_power * log2(Omega)``; below
    that floor the report carries the note ``NO_SIGNAL``.  Two consequences
    of the gain hypothesis are recorded: the floor itself
    (``H_2(XY) >= (H_2(X)+H_2(Y))/2 - floor``) and the balance
    ``|H_2(X) - H_2(Y)| <= 4 log K + 2 omega_power log2(Omega)``.

    Parameters
    ----------
    X, Y : AtomicMeasure
        Laws of the two independent factors.
    eta : float
    budget : int, optional
        Atom budget for ``XY`` on SU(2) (sampled beyond it).
    """
    model = X.model
    kw = {} if budget is None else {"budget": budget}
    XY = convolve(X, Y, seed=seed, **kw)
    hx = renyi_entropy(X, eta)
    hy = renyi_entropy(Y, eta)
    hxy = renyi_entropy(XY, eta)
    om = omega(model)
    floor = constants.omega_power * math.log2(om)
    raw = 0.5 * (hx + hy) - hxy
    log_k = max(raw, floor)
    signal = raw > floor
    lhs = abs(hx - hy)
    rhs = 4.0 * log_k + 2.0 * constants.omega_power * math.log2(om)
    return EntropyGainReport(
        eta=float(eta), H_X=hx, H_Y=hy, H_XY=hxy, raw_log_k=raw, log_k=log_k,
        floor=floor, omega=om, signal=signal, floor_ok=raw <= floor + 1e-9,
        balance_lhs=lhs, balance_rhs=rhs, balance_ok=lhs <= rhs + 1e-9,
        note="" if signal else NO_SIGNAL,
    )


def dimension_check(model: GroupModel, eta: float, constants: BGConstants = DEFAULTS,
                    points: int = 17) -> dict:
    """Smallest ``C`` with ``C^-1 eta^d0 <= |1_{a eta}| <= C eta^d0`` on the grid.

    ``a`` runs over ``points`` log-spaced values in ``[1/C', C']`` and ``d0``
    comes from the model's reference fit.  Radii beyond the diameter are
    clipped.  The value is reported, not enforced; it shows how far the
    working scale is from the dimension condition.
    """
    d0 = reference_fit(model).d0_hat
    Cp = constants.C_prime
    a = np.geomspace(1.0 / Cp, Cp, points)
    radii = np.minimum(a * eta, model.diameter)
    vols = np.array([ball_volume(model, r) for r in radii])
    base = eta ** d0
    C = float(np.max(np.maximum(vols / base, base / vols)))
    return {"eta": float(eta), "C_prime": Cp, "d0": float(d0), "C_needed": C,
            "log2_C_needed": math.log2(C)}


# ---------------------------------------------------------------------------
# tail partition


@dataclass
class TailPartition:
    """Net of ``supp(mu)_eta`` split by the value of ``mu_{2 eta}``.

    ``gt``, ``lt`` and ``mid`` are the net centers in ``C(mu; >)``,
    ``C(mu; <)`` and ``C(mu; ~)``.  ``middle`` is the density ``mu_eta^~``
    (``mu_eta`` off the thickened tails) on the whole group.
    """

    eta: float
    K: float
    centers: np.ndarray
    gt: np.ndarray
    lt: np.ndarray
    mid: np.ndarray
    l2sq: float
    upper: float
    lower: float
    mass_gt: float
    norm_lt: float
    gt_bound: float
    lt_bound: float
    middle: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)
    omega: float = 1.0
    mass_lt: float = 0.0

    @property
    def gt_ok(self) -> bool:
        return self.mass_gt <= self.gt_bound * (1 + 1e-12)

    @property
    def lt_ok(self) -> bool:
        return self.norm_lt <= self.lt_bound * (1 + 1e-12)

    def middle_volume(self, model: _IndexModel) -> float:
        """Haar volume of ``C(mu; ~)_eta``."""
        if len(self.mid) == 0:
            return 0.0
        return len(thicken(model, self.mid, self.eta)) / model.order

    def as_dict(self) -> dict:
        return {
            "eta": self.eta,
            "K": self.K,
            "net_size": int(len(self.centers)),
            "sizes": {">": int(len(self.gt)), "<": int(len(self.lt)), "~": int(len(self.mid))},
            "l2sq": self.l2sq,
            "thresholds": {"upper": self.upper, "lower": self.lower},
            "tail_mass_gt_L1": self.mass_gt,
            "tail_norm_lt_L2": self.norm_lt,
            "bound_gt": self.gt_bound,
            "bound_lt": self.lt_bound,
            "gt_ok": self.gt_ok,
            "lt_ok": self.lt_ok,
        }


def tail_partition(mu, eta: float, K: float, constants: BGConstants = DEFAULTS) -> TailPartition:
    """Classify a maximal ``eta``-net of ``supp(mu)_eta`` by ``mu_{2 eta}``.

    A center ``x`` goes to ``C(mu; >)`` when
    ``mu_{2eta}(x) > K^10 ||mu_eta||_2^2``, to ``C(mu; <)`` when
    ``mu_{2eta}(x) < K^-10 ||mu_eta||_2^2`` and to the middle otherwise.  The
    tail masses ``||mu_eta^>||_1`` and ``||mu_eta^<||_2`` are compared with
    ``Omega^p K^-10`` and ``Omega^p K^-5 ||mu_eta||_2``.
    """
    model = mu.model
    _require_index(model, "tail_partition")
    if K < 1:
        raise ValueError("K must be at least 1")
    w = _weights(mu)
    dens = smoothed_density(model, mu, eta)
    dens2 = smoothed_density(model, mu, 2 * eta)
    l2sq = _l2sq(dens)
    supp = np.flatnonzero(w > 0)
    centers = _greedy_index(model, thicken(model, supp, eta), eta)
    upper = K ** 10 * l2sq
    lower = K ** -10 * l2sq
    v = dens2[centers]
    gt = centers[v > upper]
    lt = centers[v < lower]
    mid = centers[(v >= lower) & (v <= upper)]
    ind_gt = np.zeros(model.order, dtype=bool)
    ind_lt = np.zeros(model.order, dtype=bool)
    if len(gt):
        ind_gt[thicken(model, gt, eta)] = True
    if len(lt):
        ind_lt[thicken(model, lt, eta)] = True
    mass_gt = float(np.mean(dens * ind_gt))
    norm_lt = math.sqrt(float(np.mean((dens * ind_lt) ** 2)))
    middle = np.where(ind_gt | ind_lt, 0.0, dens)
    om = omega(model)
    p = constants.omega_power
    return TailPartition(
        eta=float(eta), K=float(K), centers=centers, gt=gt, lt=lt, mid=mid, l2sq=l2sq,
        upper=upper, lower=lower, mass_gt=mass_gt, norm_lt=norm_lt,
        gt_bound=om ** p * K ** -10, lt_bound=om ** p * K ** -5 * math.sqrt(l2sq),
        middle=middle, density=dens, omega=om, mass_lt=float(np.mean(dens * ind_lt)),
    )


# ---------------------------------------------------------------------------
# middle-set energy


@dataclass
class MiddleEnergyReport:
    """Energy bounds for the middle parts of ``mu`` and ``nu``."""

    gain: EntropyGainReport
    tails_x: TailPartition
    tails_y: TailPartition
    conv_norm: Optional[float] = None
    conv_bound: Optional[float] = None
    energy: Optional[int] = None
    energy_scale: Optional[float] = None
    N_x: Optional[int] = None
    N_y: Optional[int] = None
    energy_bound: Optional[float] = None
    volume_x: Optional[float] = None
    volume_bounds_x: Optional[tuple] = None
    volume_y: Optional[float] = None
    volume_bounds_y: Optional[tuple] = None
    failure: str = ""

    @property
    def conv_ok(self) -> bool:
        return self.conv_norm is not None and self.conv_norm >= self.conv_bound * (1 - 1e-12)

    @property
    def energy_ok(self) -> bool:
        return self.energy is not None and self.energy >= self.energy_bound * (1 - 1e-12)

    @property
    def volume_ok(self) -> bool:
        def inside(v, b):
            return b is not None and b[0] * (1 - 1e-12) <= v <= b[1] * (1 + 1e-12)
        return inside(self.volume_x, self.volume_bounds_x) and inside(self.volume_y, self.volume_bounds_y)

    @property
    def passed(self) -> bool:
        return not self.failure and self.conv_ok and self.energy_ok and self.volume_ok

    def as_dict(self) -> dict:
        return {
            "gain": self.gain.as_dict(),
            "tails_x": self.tails_x.as_dict(),
            "tails_y": self.tails_y.as_dict(),
            "middle_conv_norm": self.conv_norm,
            "middle_conv_bound": self.conv_bound,
            "middle_conv_ok": self.conv_ok,
            "energy_scale": self.energy_scale,
            "energy": self.energy,
            "N_x": self.N_x,
            "N_y": self.N_y,
            "energy_bound": self.energy_bound,
            "energy_ok": self.energy_ok,
            "volume_x": self.volume_x,
            "volume_bounds_x": None if self.volume_bounds_x is None else list(self.volume_bounds_x),
            "volume_y": self.volume_y,
            "volume_bounds_y": None if self.volume_bounds_y is None else list(self.volume_bounds_y),
            "volume_ok": self.volume_ok,
            "failure": self.failure,
            "passed": self.passed,
        }


def _net_energy(model: _IndexModel, A, B, r: float):
    """``E_r`` of the ``r``-nets of ``A`` and ``B`` and the net sizes.

    On subgroup-ball models an ``r``-net has one point per coset of ``1_r``,
    so the nets are ``r``-separated and ``E_r`` is the exact count of
    near-quadruples.
    """
    nA = _greedy_index(model, A, r)
    nB = _greedy_index(model, B, r)
    rep = approx_energy(model, nA, nB, r)
    return rep.approx, len(nA), len(nB)


def _swallowing_tail(tp: TailPartition, name: str) -> str:
    tail = ">" if tp.mass_gt >= tp.mass_lt else "<"
    return (f"middle set of {name} is empty: tail C({name};{tail}) holds mass "
            f"{max(tp.mass_gt, tp.mass_lt):.6g} ({len(tp.gt)} centers above, {len(tp.lt)} below)")


def middle_energy_check(X, Y, eta: float, K: Optional[float] = None,
                        constants: BGConstants = DEFAULTS) -> MiddleEnergyReport:
    """Check the middle-part convolution bound, the net energy and the volume sandwich.

    Asserted inequalities (with ``p = omega_power``):

    * ``||mu^~ * nu^~||_2 >= (2K)^-1 ||mu_eta||_2^{1/2} ||nu_eta||_2^{1/2}``
    * ``E_{16 eta}(C(mu;~), C(nu;~)) >= K^-c_energy N^{3/2} N^{3/2}`` with
      ``N`` the ``16 eta`` covering numbers of the middle nets
    * ``K^-24 Omega^-p / ||mu_eta||^2 <= |C(mu;~)_eta| <= Omega^p K^20 / ||mu_eta||^2``
      and the same for ``nu``.

    ``K`` defaults to the clamped value from :func:`entropy_gain`.
    """
    model = X.model
    _require_index(model, "middle_energy_check")
    gain = entropy_gain(X, Y, eta, constants)
    K = gain.K if K is None else float(K)
    tx = tail_partition(X, eta, K, constants)
    ty = tail_partition(Y, eta, K, constants)
    rep = MiddleEnergyReport(gain, tx, ty)
    if len(tx.mid) == 0:
        rep.failure = _swallowing_tail(tx, "X")
        return rep
    if len(ty.mid) == 0:
        rep.failure = _swallowing_tail(ty, "Y")
        return rep
    mx = DensityVector(model, tx.middle)
    my = DensityVector(model, ty.middle)
    c = convolve(mx, my)
    rep.conv_norm = math.sqrt(_l2sq(np.asarray(c.values)))
    rep.conv_bound = (2 * K) ** -1 * (tx.l2sq * ty.l2sq) ** 0.25
    r = min(16 * eta, model.diameter)
    E, Nx, Ny = _net_energy(model, tx.mid, ty.mid, r)
    rep.energy, rep.N_x, rep.N_y, rep.energy_scale = int(E), Nx, Ny, r
    rep.energy_bound = K ** -constants.c_energy * (Nx * Ny) ** 1.5
    om = omega(model)
    p = constants.omega_power
    rep.volume_x = tx.middle_volume(model)
    rep.volume_bounds_x = (K ** -24 * om ** -p / tx.l2sq, om ** p * K ** 20 / tx.l2sq)
    rep.volume_y = ty.middle_volume(model)
    rep.volume_bounds_y = (K ** -24 * om ** -p / ty.l2sq, om ** p * K ** 20 / ty.l2sq)
    return rep


def energy_sandwich(model: _IndexModel, A, B, eta: float,
                    constants: BGConstants = DEFAULTS) -> dict:
    """Compare ``E_{eta/16}``, ``E(A_eta, B_eta)/|1_eta|^3`` and ``E_{6 eta}``.

    The check is ``E_{eta/16} <= Omega^p M`` and ``M <= Omega^p E_{6eta}``
    with ``M`` the normalized energy of the thickened sets.
    """
    _require_index(model, "energy_sandwich")
    p = constants.omega_power
    om = omega(model)
    lo = approx_energy(model, A, B, eta / 16).approx
    hi = approx_energy(model, A, B, min(6 * eta, model.diameter)).approx
    mid = energy(model, thicken(model, A, eta), thicken(model, B, eta)) / model.ball_volume(eta) ** 3
    ok_lo = lo <= om ** p * mid * (1 + 1e-9)
    ok_hi = mid <= om ** p * hi * (1 + 1e-9)
    return {"eta": float(eta), "E_small": int(lo), "thickened": float(mid), "E_large": int(hi),
            "omega_power": p, "lower_ok": bool(ok_lo), "upper_ok": bool(ok_hi),
            "ok": bool(ok_lo and ok_hi)}


# ---------------------------------------------------------------------------
# approximate subgroups


@dataclass
class VerificationResult:
    """Outcome of :func:`verify_approx_subgroup`.

    ``K_verified`` is the number of translates ``T`` found by the greedy
    cover of ``H.H`` (an upper-bound certificate).  ``ok`` is False when ``H``
    is not symmetric within ``eta`` (``witness`` holds the offending element)
    or when more than ``K_max`` translates were needed.
    """

    ok: bool
    K_verified: Optional[int]
    T: np.ndarray
    witness: Optional[int] = None
    reason: str = ""

    def as_dict(self) -> dict:
        return {"ok": self.ok, "K_verified": self.K_verified, "T_size": int(len(self.T)),
                "witness": self.witness, "reason": self.reason}


def _weighted_greedy_cover(sets: List[np.ndarray], n_points: int) -> List[int]:
    """Greedy set cover where a point is worth ``1 / (number of sets containing it)``.

    Weighting favours sets that reach rarely covered points first, which
    finds the two-translate cover of an interval's sumset that plain
    max-coverage greedy misses.
    """
    freq = np.zeros(n_points)
    for s in sets:
        freq[s] += 1
    weight = np.where(freq > 0, 1.0 / np.maximum(freq, 1), 0.0)
    uncovered = np.ones(n_points, dtype=bool)
    chosen = []
    while uncovered.any():
        best, best_val = -1, 0.0
        for k, s in enumerate(sets):
            val = float(weight[s][uncovered[s]].sum())
            if val > best_val + 1e-15:
                best, best_val = k, val
        if best < 0:
            raise RuntimeError("points left that no set covers")
        chosen.append(best)
        uncovered[sets[best]] = False
    return chosen


def verify_approx_subgroup(model: _IndexModel, H, eta: float, K_max: float = math.inf) -> VerificationResult:
    """Certify that ``H`` is a ``K``-approximate subgroup at scale ``eta``.

    ``H`` must be symmetric within ``eta``: every ``h`` has some ``h'`` in
    ``H`` with ``d(h^-1, h') < eta``.  The ``eta``-net of ``H.H`` is then
    covered greedily by translates ``t . H_{2 eta}`` with ``t`` among the
    net centers.  Returns ``#T`` as ``K_verified``.
    """
    _require_index(model, "verify_approx_subgroup")
    H = np.unique(np.asarray(H, dtype=np.int64))
    if len(H) == 0:
        raise ValueError("H must be nonempty")
    Heta = np.zeros(model.order, dtype=bool)
    Heta[thicken(model, H, eta)] = True
    bad = np.flatnonzero(~Heta[model.inverse(H)])
    if len(bad):
        w = int(H[bad[0]])
        return VerificationResult(False, None, np.empty(0, dtype=np.int64), w,
                                  f"H is not symmetric within eta: no element near the inverse of {w}")
    HH = set_product(model, H, H)
    pts = _greedy_index(model, HH, eta)
    pos = np.full(model.order, -1, dtype=np.int64)
    pos[pts] = np.arange(len(pts))
    H2 = thicken(model, H, 2 * eta)
    sets = []
    for t in pts:
        idx = pos[model.multiply(t, H2)]
        sets.append(np.unique(idx[idx >= 0]))
    chosen = _weighted_greedy_cover(sets, len(pts))
    T = pts[np.asarray(chosen, dtype=np.int64)]
    k = len(T)
    if k > K_max:
        return VerificationResult(False, k, T, None, f"cover needs {k} > K_max = {K_max:g} translates")
    return VerificationResult(True, k, T)


@dataclass
class EquidistributionReport:
    """Probabilities behind the almost-equidistribution conclusion."""

    prob_x: float
    prob_y: Optional[float]
    bound: float
    popular_volume: float
    H_volume: float
    popular_bound: float
    threshold: float

    @property
    def ok(self) -> bool:
        py = self.prob_y if self.prob_y is not None else math.inf
        return (self.prob_x >= self.bound and py >= self.bound
                and self.popular_volume >= self.popular_bound)

    def as_dict(self) -> dict:
        return {
            "P_XZ_in_xH": self.prob_x,
            "P_ZY_in_Hy": self.prob_y,
            "bound": self.bound,
            "popular_volume": self.popular_volume,
            "H_eta_volume": self.H_volume,
            "popular_bound": self.popular_bound,
            "popular_threshold": self.threshold,
            "ok": self.ok,
        }


def _prob_spread_in(model: _IndexModel, w: np.ndarray, S: np.ndarray, r: float) -> float:
    """``P(gZ in S)`` with ``g ~ w`` and ``Z`` uniform on ``1_r``.

    ``1_r`` is a normal subgroup, so ``gZ`` is uniform on the coset
    ``g 1_r`` and the probability is ``sum_g w_g |g 1_r ∩ S| / |1_r|``.
    """
    ids = _coset_ids(model, r)
    ind = np.zeros(model.order)
    ind[S] = 1.0
    frac = np.bincount(ids, weights=ind, minlength=model.order) / np.maximum(
        np.bincount(ids, minlength=model.order), 1)
    return float(np.sum(w * frac[ids]))


def equidistribution_check(X, H, x, eta: float, K: float, Y=None, y=None,
                           constants: BGConstants = DEFAULTS) -> EquidistributionReport:
    """Exact almost-equidistribution probabilities on a subgroup-ball model.

    Computes ``P(XZ in (xH)_eta)`` (and ``P(ZY in (Hy)_eta)`` when ``Y`` and
    ``y`` are given) with ``Z`` uniform on ``1_{3 eta}``, and the Haar volume
    of ``{h in H_eta : P(X in (xh)_{3 eta}) >= C_hat K^-10 2^-H_2(X; eta)}``.
    Both probabilities are compared with ``K^-c_eq`` and the popular volume
    with ``K^-c_eq |H_eta|``.
    """
    model = X.model
    _require_index(model, "equidistribution_check")
    H = np.unique(np.asarray(H, dtype=np.int64))
    r3 = min(3 * eta, model.diameter)
    wx = _weights(X)
    xH = model.multiply(int(x), H)
    px = _prob_spread_in(model, wx, thicken(model, xH, eta), r3)
    py = None
    if Y is not None:
        Hy = model.multiply(H, int(y))
        py = _prob_spread_in(model, _weights(Y), thicken(model, Hy, eta), r3)
    bound = K ** -constants.c_eq
    Heta = thicken(model, H, eta)
    ids3 = _coset_ids(model, r3)
    cmass = np.bincount(ids3, weights=wx, minlength=model.order)
    thr = omega(model) ** constants.c_hat * K ** -10 * 2.0 ** -renyi_entropy(X, eta)
    pmass = cmass[ids3[model.multiply(int(x), Heta)]]
    pop_vol = float(np.count_nonzero(pmass >= thr)) / model.order
    Hvol = len(Heta) / model.order
    return EquidistributionReport(px, py, bound, pop_vol, Hvol, bound * Hvol, thr)


@dataclass
class ApproxGroupCandidate:
    """Candidate approximate subgroup with its certificates."""

    H: np.ndarray
    T: np.ndarray
    K_verified: Optional[int]
    x: int
    y: int
    entropy: float
    H2_X: float
    log_k: float
    K_max: float
    verification: VerificationResult
    equidistribution: EquidistributionReport
    middle: MiddleEnergyReport
    constants: BGConstants = DEFAULTS

    @property
    def entropy_gap(self) -> float:
        return abs(self.entropy - self.H2_X)

    @property
    def entropy_ok(self) -> bool:
        return self.entropy_gap <= self.constants.entropy_multiple * self.log_k + 1e-9

    @property
    def passed(self) -> bool:
        return self.verification.ok and self.entropy_ok and self.equidistribution.ok

    def as_dict(self) -> dict:
        return {
            "H_size": int(len(self.H)),
            "K_verified": self.K_verified,
            "K_max": self.K_max,
            "T": [int(t) for t in self.T],
            "x": self.x,
            "y": self.y,
            "h_H": self.entropy,
            "H2_X": self.H2_X,
            "entropy_gap": self.entropy_gap,
            "entropy_bound": self.constants.entropy_multiple * self.log_k,
            "entropy_ok": self.entropy_ok,
            "verification": self.verification.as_dict(),
            "equidistribution": self.equidistribution.as_dict(),
            "passed": self.passed,
        }


class ExtractionFailure(RuntimeError):
    """Raised when the pipeline cannot produce a candidate."""


def _best_translate(model: _IndexModel, C: np.ndarray, H: np.ndarray, left: bool) -> int:
    """Translate ``x`` in ``C`` maximizing ``#(C ∩ xH)`` (or ``#(C ∩ Hx)``)."""
    inH = np.zeros(model.order, dtype=bool)
    inH[H] = True
    best, best_n = int(C[0]), -1
    for x in C:
        if left:
            n = int(np.count_nonzero(inH[model.multiply(model.inverse(x), C)]))
        else:
            n = int(np.count_nonzero(inH[model.multiply(C, model.inverse(x))]))
        if n > best_n:
            best, best_n = int(x), n
    return best


def _popular_set(model: _IndexModel, A: np.ndarray, theta: float, eta: float) -> np.ndarray:
    """Net points ``g`` of ``A A^-1`` with ``|A ∩ gA| >= theta |A|^2``."""
    n = model.order
    counts = np.zeros(n)
    Ainv = model.inverse(A)
    step = max(1, 2_000_000 // len(A))
    for s in range(0, len(A), step):
        prod = model.multiply(A[s:s + step, None], Ainv[None, :]).ravel()
        counts += np.bincount(prod, minlength=n)
    overlap = counts / n          # |A ∩ gA| in Haar measure
    volA = len(A) / n
    net = _greedy_index(model, np.flatnonzero(counts > 0), eta)
    return net[overlap[net] >= theta * volA ** 2]


def extract_approx_subgroup(X, Y, eta: float, K: Optional[float] = None,
                            constants: BGConstants = DEFAULTS) -> ApproxGroupCandidate:
    """Candidate approximate subgroup from the middle net of ``X``.

    ``A_bar`` is the ``eta``-thickening of ``C(mu; ~)``; the candidate is the
    popular set ``{g in net : (1_A * 1_A^-1)(g) >= theta |A|^2}`` with
    ``theta = K^-c_pop``, closed under inversion.  The translates ``x`` and
    ``y`` maximize ``#(C(mu;~) ∩ xH)`` and ``#(C(nu;~) ∩ Hy)``.  The three
    conclusions are then checked: ``K_verified <= K^c_approx``, the entropy
    gap and the equidistribution probabilities.

    Raises
    ------
    ExtractionFailure
        When the middle energy check fails or the popular set is empty.
    """
    model = X.model
    mid = middle_energy_check(X, Y, eta, K, constants)
    if mid.failure:
        raise ExtractionFailure(mid.failure)
    if not mid.passed:
        raise ExtractionFailure("middle energy check did not pass; extraction needs it")
    K = mid.tails_x.K
    A = thicken(model, mid.tails_x.mid, eta)
    P = _popular_set(model, A, K ** -constants.c_pop, eta)
    if len(P) == 0:
        raise ExtractionFailure("popular set is empty")
    H = np.union1d(P, model.inverse(P))
    x = _best_translate(model, mid.tails_x.mid, H, left=True)
    y = _best_translate(model, mid.tails_y.mid, H, left=False)
    K_max = K ** constants.c_approx
    ver = verify_approx_subgroup(model, H, eta, K_max)
    eq = equidistribution_check(X, H, x, eta, K, Y=Y, y=y, constants=constants)
    h = metric_entropy(model, H, eta).h
    return ApproxGroupCandidate(
        H=H, T=ver.T, K_verified=ver.K_verified, x=x, y=y, entropy=h,
        H2_X=mid.gain.H_X, log_k=math.log2(K), K_max=K_max, verification=ver,
        equidistribution=eq, middle=mid, constants=constants,
    )
