"""Random walks: convolution powers, transfer-operator norms and spectral gaps.

The transfer operator of a probability measure ``mu`` is ``T_mu f = mu * f``.
Since ``(mu * f)^(pi) = f^(pi) mu^(pi)``, its norm on the ``pi``-isotypic
part is ``||mu^(pi)||_op``, and ``lambda(mu; band)`` is the maximum of these
over an enumerated band.  On SU(2) the catalog is truncated and every such
``lambda`` is only a lower bound for the supremum over the band.

On models whose balls are normal subgroups (finite groups, towers and their
quotients) the Littlewood-Paley multipliers take values in ``{0, 1}`` and the
exceptional subspace ``H_0`` has an exact description: its orthogonal
complement is the range of ``P_{eta_{n+1}} - P_{eta_1}``.  Gaps on that
complement are computed from the transfer matrix itself, which also covers
groups too large for an irreducible catalog.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .certify import op_norm
from .fourier import (
    ATOM_BUDGET,
    AtomicMeasure,
    BandLimitedFunction,
    DensityVector,
    IrrepLabel,
    convolve,
    enumerate_irreps,
    fourier_coeff,
)
from .groups import (
    CyclicGroup,
    GroupModel,
    SL2ModGroup,
    SU2Model,
    _IndexModel,
)
from .lpaley import ScaleLadder, _defect, _multiplier, lp_multiplier
from .scales import _coset_ids

__all__ = [
    "SpectralReport",
    "FlatteningReport",
    "ExceptionalSpace",
    "ScaleGapReport",
    "convolution_power",
    "transfer_norm",
    "transfer_matrix",
    "complement_gap",
    "flattening_ladder",
    "exceptional_subspace",
    "scale_gap_certificate",
    "generating_measure",
    "GENERATING_SETS",
    "DEFAULT_C2",
    "DEFAULT_C3",
    "DEFAULT_C",
]

DEFAULT_C2 = 2.0
DEFAULT_C3 = 4.0
DEFAULT_C = 0.05

#: dense linear algebra is used for transfer matrices up to this order
DENSE_MAX_ORDER = 2000

GENERATING_SETS = ("uv", "uvw", "random")


# ---------------------------------------------------------------------------
# generating measures


def _sl2_group(model):
    grp = getattr(model, "group", None)
    return grp if isinstance(grp, SL2ModGroup) else None


def generating_measure(model: _IndexModel, kind: str = "uv", seed: int = 0,
                       size: int = 32) -> AtomicMeasure:
    """A symmetric measure whose support generates the group.

    ``"uv"`` is uniform on ``u^{+-1}, v^{+-1}`` with ``u = [[1,1],[0,1]]`` and
    ``v = [[1,0],[1,1]]`` on SL_2 groups, and on ``+-1`` for cyclic groups.
    ``"uvw"`` adds ``(uv)^{+-1}``.  ``"random"`` is uniform on a seeded random
    symmetric set of about ``size`` elements, enlarged until it generates.
    """
    if not isinstance(model, _IndexModel):
        raise TypeError(f"generating sets need a finite or profinite model, not {model.name}")
    grp = model.group
    inv = grp.inv
    if kind in ("uv", "uvw"):
        sl2 = _sl2_group(model)
        if sl2 is not None:
            u, v = sl2.index_of([[1, 1, 0, 1], [1, 0, 1, 1]])
            gens = [u, v]
            if kind == "uvw":
                gens.append(int(grp.mul(u, v)))
        elif isinstance(grp, CyclicGroup):
            gens = [1] if kind == "uv" else [1, 2 % grp.order]
        else:
            raise ValueError(f"no standard generators for {model.name}; use kind='random'")
        atoms = sorted({int(g) for g in gens} | {int(inv[g]) for g in gens})
    elif kind == "random":
        rng = np.random.default_rng(seed)
        k = max(1, min(size // 2, grp.order - 1))
        chosen = set()
        while True:
            for g in rng.choice(np.arange(1, grp.order), size=k, replace=False):
                chosen |= {int(g), int(inv[g])}
            atoms = sorted(chosen)
            if len(grp.generate(atoms)) == grp.order:
                break
    else:
        raise ValueError(f"unknown generating set {kind!r}")
    return AtomicMeasure.uniform(model, np.asarray(atoms, dtype=np.int64), symmetric=True)


# ---------------------------------------------------------------------------
# convolution powers


def convolution_power(mu, l: int, budget: int = ATOM_BUDGET, seed: int = 0):
    """``mu^(l) = mu * ... * mu`` (``l`` factors).

    Finite models accumulate exactly (atomic input returns an atomic measure
    with the exact weights); SU(2) measures are resampled to ``budget`` atoms
    once the product support would exceed it, with stream ``seed + step``.
    Band-limited input returns ``mu^(pi)^l``.
    """
    if l < 1:
        raise ValueError("l must be at least 1")
    if isinstance(mu, BandLimitedFunction):
        return BandLimitedFunction(mu.model, {p: np.linalg.matrix_power(c, l)
                                              for p, c in mu.coeffs.items()})
    out = mu
    for step in range(1, l):
        if isinstance(mu, DensityVector):
            out = convolve(out, mu)
        else:
            out = convolve(out, mu, budget=budget, seed=seed + step)
    return out


def _density_powers(mu: AtomicMeasure, l_max: int):
    """Densities of ``mu^(1) .. mu^(l_max)`` on an index model (exact)."""
    model = mu.model
    grp = model.group
    x = np.arange(grp.order)
    atoms = np.asarray(mu.atoms)
    shifted = [grp.mul(grp.inv[a], x) for a in atoms]
    cur = mu.to_density().values
    yield cur
    for _ in range(1, l_max):
        nxt = np.zeros_like(cur)
        for idx, w in zip(shifted, mu.weights):
            nxt += w * cur[idx]  # (mu * f)(x) = sum_a w_a f(a^{-1} x)
        cur = nxt
        yield cur


# ---------------------------------------------------------------------------
# transfer operators


def transfer_matrix(mu: AtomicMeasure) -> sparse.csr_matrix:
    """Sparse matrix of ``T_mu f = mu * f`` on ``L^2`` of a finite model."""
    model = mu.model
    grp = model.group
    n = grp.order
    x = np.arange(n)
    rows, cols, vals = [], [], []
    for a, w in zip(np.asarray(mu.atoms), mu.weights):
        rows.append(x)
        cols.append(grp.mul(grp.inv[a], x))
        vals.append(np.full(n, w))
    T = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n))
    T.sum_duplicates()
    return T


@dataclass
class SpectralReport:
    """Per-irrep ``||mu^(pi)||_op`` and the band maximum ``lam``.

    ``gap = -log(lam)`` (natural log; ``inf`` when ``lam = 0``).  ``exact``
    is set when the catalog is complete for the band; otherwise ``lam`` is a
    lower bound for the supremum over the band (``note`` says so).

    For symmetric ``mu`` every coefficient is Hermitian and ``lam_top`` is the
    largest signed eigenvalue over the band.  It differs from ``lam`` when the
    spectrum reaches further on the negative side; on ``Z/p`` with
    ``mu = (delta_1 + delta_{-1})/2`` the norm is ``cos(pi/p)`` while the
    top eigenvalue is ``cos(2 pi/p)``.
    """

    per_irrep: Dict[str, float]
    lam: float
    gap: float
    band: tuple
    exact: bool
    note: str = ""
    matrix_lam: Optional[float] = None
    lam_top: Optional[float] = None
    matrix_lam_top: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "gap": self.gap,
            "lambda_top": self.lam_top,
            "matrix_lambda_top": self.matrix_lam_top,
            "band": list(self.band),
            "exact": self.exact,
            "note": self.note,
            "matrix_lambda": self.matrix_lam,
            "per_irrep": self.per_irrep,
        }


def _gap(lam: float) -> float:
    return math.inf if lam <= 0 else -math.log(lam)


def transfer_norm(mu, band=(1, math.inf), include_trivial: bool = False,
                  matrix_check: bool = True, exclude: Sequence[IrrepLabel] = ()) -> SpectralReport:
    """``lambda(mu; band)`` over irreps with ``band[0] <= dim <= band[1]``.

    The trivial irrep is left out unless ``include_trivial``, so the default
    band ``(1, inf)`` gives ``lambda(mu; L^2_0)``.

    Parameters
    ----------
    mu : AtomicMeasure or DensityVector
    band : (float, float)
        Dimension interval.  SU(2) needs a finite upper end.
    include_trivial : bool
        Keep the trivial irrep (then ``lam = 1`` for probability measures).
    matrix_check : bool
        On finite models of order at most 2000 with ``band = (1, inf)``, also
        compute the top singular value of the transfer matrix on mean-zero
        functions.
    exclude : labels
        Irreps to leave out (for instance an exceptional set).
    """
    model = mu.model
    lo, hi = band
    if hi < lo:
        raise ValueError("empty band")
    if isinstance(model, SU2Model) and not math.isfinite(hi):
        raise ValueError("SU(2) needs a finite band upper end")
    labels = [p for p in enumerate_irreps(model, hi)
              if p.dim >= lo and (include_trivial or not p.is_trivial) and p not in set(exclude)]
    if not labels:
        raise ValueError("empty band")
    per = {}
    symmetric = isinstance(mu, AtomicMeasure) and mu.is_symmetric()
    top = -math.inf
    for p in labels:
        F = fourier_coeff(mu, p)
        per[str(p)] = float(op_norm(F))
        if symmetric:
            top = max(top, float(np.linalg.eigvalsh(0.5 * (F + F.conj().T))[-1]))
    lam = max(per.values())
    lam_top = top if symmetric else None
    mlam_top = None
    exact = not isinstance(model, SU2Model)
    note = "" if exact else f"band supremum lower bound (catalog cut at dim {int(hi)})"
    mlam = None
    if (matrix_check and isinstance(model, _IndexModel) and model.order <= DENSE_MAX_ORDER
            and lo <= 1 and not math.isfinite(hi) and not exclude and not include_trivial):
        if isinstance(mu, DensityVector):
            raise TypeError("matrix check needs an atomic measure")
        T = transfer_matrix(mu).toarray()
        M = T - T.mean(axis=0, keepdims=True)  # T (I - J/n) = T - J/n for stochastic T
        mlam = float(np.linalg.norm(M, 2))
        if symmetric:
            # T is symmetric for symmetric mu; constants sit in the kernel of M
            ev = np.linalg.eigvalsh(0.5 * (M + M.T))
            # drop the single zero eigenvalue contributed by the constants
            k = int(np.argmin(np.abs(ev)))
            mlam_top = float(np.delete(ev, k)[-1])
    return SpectralReport(per, lam, _gap(lam), (lo, hi), exact, note, mlam,
                          lam_top, mlam_top)


def _projector_apply(model: _IndexModel, eta: float):
    """Return ``f -> P_eta f`` (coset averaging) acting on vectors or matrices."""
    if eta <= 0:
        return lambda f: f
    ids = _coset_ids(model, eta)
    uniq, lab = np.unique(ids, return_inverse=True)
    S = sparse.csr_matrix((np.ones(model.order), (lab, np.arange(model.order))),
                          shape=(len(uniq), model.order))
    counts = np.asarray(S.sum(axis=1)).ravel()
    D = sparse.diags(1.0 / counts)
    ST = S.T.tocsr()
    return lambda f: ST @ (D @ (S @ f))


def complement_gap(mu: AtomicMeasure, eta_lo: float, eta_hi: float, tol: float = 1e-10) -> float:
    """Top singular value of ``(P_{eta_hi} - P_{eta_lo}) T_mu`` on a finite model.

    ``eta_lo > eta_hi``; the range of ``P_{eta_hi} - P_{eta_lo}`` is spanned
    by the isotypic parts of irreps trivial on ``1_{eta_hi}`` but not on
    ``1_{eta_lo}``.  Returns 0 when that range is zero.
    """
    model = mu.model
    n = model.order
    k_lo = len(np.unique(_coset_ids(model, eta_lo))) if eta_lo > 0 else n
    k_hi = len(np.unique(_coset_ids(model, eta_hi))) if eta_hi > 0 else n
    if k_hi - k_lo <= 0:
        return 0.0
    P_hi = _projector_apply(model, eta_hi)
    P_lo = _projector_apply(model, eta_lo)
    T = transfer_matrix(mu)
    if n <= DENSE_MAX_ORDER:
        M = T.toarray()
        M = P_hi(M) - P_lo(M)
        return float(np.linalg.norm(M, 2))

    def matvec(f):
        g = T @ f
        return P_hi(g) - P_lo(g)

    def rmatvec(f):
        g = P_hi(f) - P_lo(f)
        return T.T @ g

    op = splinalg.LinearOperator((n, n), matvec=matvec, rmatvec=rmatvec, dtype=float)
    v0 = np.random.default_rng(0).standard_normal(n)
    if mu.symmetric or mu.is_symmetric():
        # projectors commute with T_mu, so the operator is self-adjoint
        vals = splinalg.eigsh(op, k=1, which="LM", tol=tol, v0=v0, return_eigenvectors=False)
        return float(abs(vals[0]))
    s = splinalg.svds(op, k=1, tol=tol, v0=v0, return_singular_vectors=False)
    return float(s[0])


# ---------------------------------------------------------------------------
# exceptional subspace


@dataclass
class ExceptionalSpace:
    """Irreps whose ladder multipliers all stay below ``eta_i^(1/(8L+4))``.

    ``bound`` is ``2 C1 eta_1^(-d0)``, the bound the Hilbert-Schmidt argument
    gives for the ball of ``Delta_0 = P_{eta_1}``; ``bound_exact`` replaces
    ``C1 eta_1^(-d0)`` by ``1/|1_{eta_1}|``.  ``bound_C0`` is the same
    expression with ``C0`` and ``bound_eta0`` the value at ``eta_0``; both
    are reported and not asserted.
    """

    exponent: float
    labels: List[IrrepLabel]
    dimension: int
    bound: float
    bound_exact: float
    bound_C0: Optional[float]
    bound_eta0: float
    within_bound: bool
    catalog_size: int
    complete: bool

    def as_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "labels": [str(p) for p in self.labels],
            "dimension": self.dimension,
            "bound": self.bound,
            "bound_exact": self.bound_exact,
            "bound_C0": self.bound_C0,
            "bound_eta0": self.bound_eta0,
            "within_bound": self.within_bound,
            "catalog_size": self.catalog_size,
            "complete": self.complete,
        }


def exceptional_subspace(model: GroupModel, ladder: ScaleLadder, L: float, D_max: float,
                         C1: float, d0: float, C0: Optional[float] = None) -> ExceptionalSpace:
    """Index set ``E`` and ``dim H_0 = sum_{pi in E} dim(pi)^2`` over the catalog."""
    labels = enumerate_irreps(model, D_max)
    expo = 1.0 / (8 * L + 4)
    E = []
    for p in labels:
        keep = True
        for i in range(1, ladder.depth + 1):
            v = lp_multiplier(model, ladder, i, p)
            if np.ndim(v) != 0:
                raise NotImplementedError("matrix-valued ball multipliers are unsupported")
            if abs(v) >= ladder.eta_power(i, expo):
                keep = False
                break
        if keep:
            E.append(p)
    dim = int(sum(p.dim ** 2 for p in E))
    le1 = ladder.log_scales[1]
    bound = 2 * C1 * math.exp(-d0 * le1)
    eta1 = ladder.eta(1)
    vol1 = model.ball_volume(eta1) if eta1 > 0 else 0.0
    bound_exact = 2.0 / vol1 if vol1 > 0 else math.inf
    bound_C0 = None if C0 is None else 2 * C0 * math.exp(-d0 * le1)
    bound_eta0 = 2 * C1 * math.exp(-d0 * ladder.log_scales[0])
    complete = not isinstance(model, SU2Model)
    return ExceptionalSpace(expo, E, dim, bound, bound_exact, bound_C0, bound_eta0,
                            bool(dim <= bound), len(labels), complete)


# ---------------------------------------------------------------------------
# flattening


@dataclass
class FlatteningReport:
    """Large-entropy test on each ladder scale and the resulting gap check.

    ``rows`` holds, for ``i = 1 .. depth + 1``: the radius, ``h(G; eta_i)``,
    the entropy target, the least ``l`` reaching it (``None`` if no
    ``l <= C2 h`` does) and ``H_2(mu^(l); eta_i)`` for every tested ``l``.
    """

    ladder: dict
    params: dict
    rows: List[dict]
    hypothesis: bool
    lam: float
    gap: float
    bound: float
    implication_holds: bool
    h0_dimension: int
    monotonicity_violations: int
    warnings: List[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "ladder": self.ladder,
            "params": self.params,
            "rows": self.rows,
            "hypothesis": self.hypothesis,
            "lambda": self.lam,
            "gap": self.gap,
            "bound": self.bound,
            "implication_holds": self.implication_holds,
            "h0_dimension": self.h0_dimension,
            "monotonicity_violations": self.monotonicity_violations,
            "warnings": self.warnings,
        }


def _group_entropy(model: _IndexModel, eta: float) -> float:
    """``h(G; eta) = log2 N_eta(G)``; exact for subgroup balls (one point per coset)."""
    if eta <= 0:
        return math.log2(model.order)
    return math.log2(1.0 / model.ball_volume(eta))


def _collision_entropy(dens: np.ndarray, ids: np.ndarray) -> float:
    """``H_2(mu; eta)`` for subgroup balls: collision entropy of the coset masses."""
    mass = np.bincount(ids, weights=dens, minlength=len(dens)) / len(dens)
    val = -math.log2(float(np.sum(mass ** 2)))
    return 0.0 if -1e-9 < val < 0 else val


def flattening_ladder(mu: AtomicMeasure, ladder: ScaleLadder, C2: float = DEFAULT_C2,
                      L: float = 1.0, d0: float = 1.0) -> FlatteningReport:
    """Test the large-entropy hypothesis on every ladder scale and check the gap.

    For each ``i >= 1`` the least ``l <= C2 h(G; eta_i)`` with
    ``H_2(mu^(l); eta_i) >= (1 - 1/(20 L d0 a^3)) h(G; eta_i)`` is searched
    by exact convolution.  The measured gap is ``-log`` of the norm of
    ``T_mu`` on the complement of the exceptional subspace, and the report
    asserts that the hypothesis implies a gap of at least
    ``1/(40 C2 L d0 a^3)``.
    """
    model = mu.model
    if not isinstance(model, _IndexModel):
        raise NotImplementedError("flattening ladders are implemented on finite models")
    if ladder.a is None:
        raise ValueError("flattening needs a ladder with ratio a")
    warns = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ladder.check_gap_condition(L, d0)
    warns += [str(w.message) for w in caught]
    a = ladder.a
    eps = 1.0 / (20 * L * d0 * a ** 3)
    bound = 1.0 / (40 * C2 * L * d0 * a ** 3)
    scales = [ladder.eta(i) for i in range(1, ladder.depth + 2)]
    hs = [_group_entropy(model, e) for e in scales]
    l_max = max(1, int(math.floor(C2 * max(hs))))
    ids = [(_coset_ids(model, e) if e > 0 else np.arange(model.order)) for e in scales]
    H = [[] for _ in scales]
    for dens in _density_powers(mu, l_max):
        for k, lab in enumerate(ids):
            H[k].append(_collision_entropy(dens, lab))
    rows = []
    hyp = True
    mono = 0
    for k, (e, h) in enumerate(zip(scales, hs)):
        cap = int(math.floor(C2 * h))
        target = (1 - eps) * h
        least = None
        for l in range(1, max(cap, 0) + 1):
            if H[k][l - 1] >= target - 1e-12:
                least = l
                break
        if h == 0:
            least = 1  # every measure has full entropy at a scale where the ball is G
        mono += sum(1 for x, y in zip(H[k], H[k][1:]) if y < x - 1e-9)
        hyp = hyp and least is not None
        rows.append({
            "i": k + 1,
            "eta": e,
            "log_eta": ladder.log_scales[k + 1],
            "h": h,
            "target": target,
            "l_cap": cap,
            "l": least,
            "H2": H[k][:max(cap, 1)],
        })
    lam = complement_gap(mu, ladder.eta(1), ladder.eta(ladder.depth + 1))
    gap = _gap(lam)
    n = model.order
    k1 = len(np.unique(_coset_ids(model, ladder.eta(1))))
    eta_last = ladder.eta(ladder.depth + 1)
    k_last = len(np.unique(_coset_ids(model, eta_last))) if eta_last > 0 else n
    h0 = n - (k_last - k1)
    params = {"C2": C2, "L": L, "d0": d0, "a": a, "eps": eps}
    holds = (not hyp) or gap >= bound
    return FlatteningReport(ladder.as_dict(), params, rows, bool(hyp), lam, gap, bound,
                            bool(holds), int(h0), int(mono), warns)


# ---------------------------------------------------------------------------
# functions living at a scale


@dataclass
class ScaleGapReport:
    """Per-scale least ``l`` with ``max ||mu^(pi)^l|| <= eta^c`` over living bands."""

    rows: List[dict]
    all_pass: bool
    implied_gap: Optional[float]
    failures: List[str]

    def as_dict(self) -> dict:
        return {
            "rows": self.rows,
            "all_pass": self.all_pass,
            "implied_gap": self.implied_gap,
            "failures": self.failures,
        }


def _band_lives(model, p, eta, a) -> bool:
    """Whether every function in the ``p``-isotypic space lives at scale ``eta``."""
    le = math.log(eta)
    c1 = abs(_multiplier(model, math.exp(le / a), p))
    c2 = abs(_defect(model, math.exp(le * a * a), p))
    return c1 <= math.exp(le / (2 * a)) + 1e-12 and c2 <= math.exp(le * a / 2) + 1e-12


def _least_power(M: np.ndarray, target: float, cap: int):
    """Least ``l`` with ``||M^l||_op <= target``; analytic for normal ``M``."""
    s = float(op_norm(M))
    if s <= target:
        return 1, s
    if s == 0:
        return 1, 0.0
    if np.max(np.abs(M @ M.conj().T - M.conj().T @ M)) <= 1e-12:
        if s >= 1 - 1e-15:
            return None, s
        l = max(1, math.ceil(math.log(target) / math.log(s) - 1e-12))
        return l, s ** l
    P = M.copy()
    for l in range(2, cap + 1):
        P = P @ M
        v = float(op_norm(P))
        if v <= target:
            return l, v
    return None, float(op_norm(P))


def scale_gap_certificate(mu, etas: Sequence[float], C3: float = DEFAULT_C3, c: float = DEFAULT_C,
                          D_max: float = math.inf, a: float = 5.0,
                          bands: Optional[Sequence[IrrepLabel]] = None) -> ScaleGapReport:
    """For each ``eta``, the least ``l`` with ``||mu^(pi)^l|| <= eta^c`` on living bands.

    ``bands=None`` selects, per scale, the nontrivial catalog irreps whose
    isotypic spaces live at scale ``eta`` (with ratio ``a``); an explicit
    list is used at every scale instead.  A row passes when the least ``l``
    is at most ``C3 log2(1/eta)``; the implied bound ``gap >= c / C3`` is
    reported when every row passes.  The least ``l`` is reported even when it
    exceeds the cap (``None`` only when no power ever works).
    """
    model = mu.model
    catalog = [p for p in enumerate_irreps(model, D_max) if not p.is_trivial]
    coeffs = {p: fourier_coeff(mu, p) for p in (catalog if bands is None else bands)}
    rows, failures = [], []
    for eta in etas:
        if not 0 < eta < 1:
            raise ValueError("scales must lie in (0, 1)")
        cap = int(math.floor(C3 * math.log2(1.0 / eta)))
        use = list(bands) if bands is not None else [p for p in catalog if _band_lives(model, p, eta, a)]
        target = eta ** c
        worst_l, worst_label = 0, None
        never = []
        for p in use:
            l, _ = _least_power(coeffs[p], target, max(cap, 1) * 50)
            if l is None:
                never.append(str(p))
            elif l > worst_l:
                worst_l, worst_label = l, str(p)
        ok = not never and worst_l <= cap
        if never:
            failures.append(f"eta={eta}: bands {never} never contract")
        elif not ok:
            failures.append(f"eta={eta}: band {worst_label} needs l={worst_l} > {cap}")
        rows.append({
            "eta": eta,
            "bands": len(use),
            "l": worst_l if not never else None,
            "l_cap": cap,
            "limiting_band": worst_label if not never else never[0],
            "passes": bool(ok),
        })
    all_pass = all(r["passes"] for r in rows)
    return ScaleGapReport(rows, bool(all_pass), c / C3 if all_pass else None, failures)
