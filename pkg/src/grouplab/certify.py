"""Local randomness, the representation metric, levels and quasi-randomness.

A model is ``L``-locally random with coefficient ``C0`` when
``||pi(x) - pi(y)||_op <= C0 dim(pi)^L d(x, y)`` for every irreducible ``pi``.
Everything here truncates the dual at a dimension cutoff, so reported
suprema are certified *lower* bounds on the true quantities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .fourier import (
    BandLimitedFunction,
    IrrepLabel,
    convolve,
    enumerate_irreps,
    evaluate_irrep,
    finite_irreps,
    random_band_limited,
)
from .groups import (
    GroupModel,
    SU2Model,
    _IndexModel,
    ball_volume,
    fit_dimension_condition,
    reference_fit,
    rng_stream,
    torus_element,
)

__all__ = [
    "RandomnessCertificate",
    "QuasiRandomReport",
    "op_norm",
    "estimate_local_randomness",
    "rep_metric",
    "level",
    "image_size",
    "certify_metric_quasirandom",
    "MixingReport",
    "mixing_check",
    "mixing_sides",
    "sup_norm_bound",
    "DIVERGENCE_RATIO",
]

#: ratio above which a model is flagged as not locally random
DIVERGENCE_RATIO = 1e3

#: SVD is used up to this dimension, power iteration beyond
SVD_MAX_DIM = 64


def op_norm(m: np.ndarray, tol: float = 1e-12, max_iter: int = 10_000) -> np.ndarray:
    """Operator (spectral) norm of a matrix or a batch of matrices.

    Full singular values for dimension at most 64, power iteration on
    ``M^* M`` beyond that.
    """
    m = np.asarray(m)
    if max(m.shape[-2:]) <= SVD_MAX_DIM:
        return np.linalg.svd(m, compute_uv=False)[..., 0]
    batch = m.reshape((-1,) + m.shape[-2:])
    out = np.empty(len(batch))
    rng = np.random.default_rng(0)
    for k, a in enumerate(batch):
        v = rng.standard_normal(a.shape[1]) + 0j
        v /= np.linalg.norm(v)
        sigma = 0.0
        for _ in range(max_iter):
            w = a.conj().T @ (a @ v)
            nw = np.linalg.norm(w)
            if nw == 0:
                break
            v_new = w / nw
            s_new = math.sqrt(nw)
            resid = np.linalg.norm(a.conj().T @ (a @ v_new) - nw * v_new) / max(nw, 1e-300)
            v = v_new
            if abs(s_new - sigma) <= tol * max(s_new, 1.0) and resid <= 1e-6:
                sigma = s_new
                break
            sigma = s_new
        out[k] = sigma
    return out.reshape(m.shape[:-2])


@dataclass
class RandomnessCertificate:
    """Outcome of a local-randomness estimate.

    ``C0_hat`` is the maximum of ``||pi(x) - pi(y)|| / (dim^L d(x, y))`` over
    every tested irreducible and pair, and is a certified lower bound on the
    best coefficient.
    """

    L: float
    C0_hat: float
    witness: Optional[dict]
    D_max: float
    pairs: int
    seed: int
    per_irrep: List[dict] = field(default_factory=list)
    divergent: bool = False
    status: str = "certified lower bound"
    matrix_check: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "L": self.L,
            "C0_hat": self.C0_hat,
            "status": self.status,
            "divergent": self.divergent,
            "witness": self.witness,
            "D_max": self.D_max,
            "pairs": self.pairs,
            "seed": self.seed,
            "matrix_check_max_abs_dev": self.matrix_check,
            "per_irrep": self.per_irrep,
        }


def _su2_torus_norms(max_two_j: int, theta: np.ndarray) -> np.ndarray:
    """``||pi_j(u(theta)) - I||_op`` for all ``2j = 0..max_two_j``.

    ``pi_j(g) - I`` is normal with eigenvalues ``e^{2 i m theta} - 1`` for
    ``m = -j..j``, so its norm is ``2 max_m |sin(m theta)|``.  Returns an array
    of shape ``(max_two_j + 1, len(theta))``.
    """
    theta = np.asarray(theta, dtype=float)
    out = np.zeros((max_two_j + 1, theta.size))
    best = {0: np.zeros(theta.size), 1: np.zeros(theta.size)}
    for n in range(max_two_j + 1):
        parity = n % 2
        m = n / 2.0
        best[parity] = np.maximum(best[parity], np.abs(np.sin(m * theta)))
        out[n] = 2.0 * best[parity]
    return out


def su2_torus_grid(n: int = 4096) -> np.ndarray:
    """Angles used alongside Haar pairs: log-spaced near 0 and uniform on ``(0, pi]``."""
    return np.unique(np.concatenate([np.geomspace(1e-8, 1.0, n // 2), np.linspace(0, math.pi, n // 2 + 1)[1:]]))


def estimate_local_randomness(model: GroupModel, L: float, D_max: float, pairs: int,
                              seed: int, torus_grid: int = 4096,
                              matrix_checks: int = 32) -> RandomnessCertificate:
    """Estimate the local-randomness coefficient ``C0`` for exponent ``L``.

    Parameters
    ----------
    model : GroupModel
    L : float
        Exponent on ``dim(pi)``.
    D_max : float
        Dimension cutoff for the dual.
    pairs : int
        Number of Haar-random pairs ``(x, y)``.
    seed : int
    torus_grid : int
        SU(2) only: number of extra torus angles.
    matrix_checks : int
        SU(2) only: pairs on which the spectral formula is compared with an
        explicit matrix norm; the largest deviation is reported.

    Notes
    -----
    On SU(2) the norm ``||pi(x) - pi(y)|| = ||pi(y^{-1} x) - I||`` is read off
    the eigenvalues of ``pi(y^{-1} x)``, which are ``e^{2 i m theta}`` with
    ``theta = d(x, y)``.  Finite models evaluate the catalog matrices.
    """
    if pairs < 1:
        raise ValueError("pairs must be at least 1")
    if isinstance(model, SU2Model):
        return _su2_certificate(model, L, D_max, pairs, seed, torus_grid, matrix_checks)
    labels = [p for p in enumerate_irreps(model, D_max)]
    x = model.haar_sample(seed, pairs)
    y = model.haar_sample(seed + 1, pairs)
    dist = np.asarray(model.distance(x, y), dtype=float)
    keep = dist > 0
    # the exact supremum over a finite group only needs g = y^{-1} x; add it
    # exhaustively when the group is small
    if isinstance(model, _IndexModel) and model.order <= 4096:
        xs = np.concatenate([np.asarray(x)[keep], model.elements()[1:]])
        ys = np.concatenate([np.asarray(y)[keep], np.zeros(model.order - 1, dtype=np.int64)])
    else:
        xs, ys = np.asarray(x)[keep], np.asarray(y)[keep]
    dist = np.asarray(model.distance(xs, ys), dtype=float)
    best, witness, table = 0.0, None, []
    for p in labels:
        if p.is_trivial or dist.size == 0:
            table.append({"irrep": str(p), "dim": p.dim, "max_ratio": 0.0})
            continue
        diff = evaluate_irrep(model, p, xs) - evaluate_irrep(model, p, ys)
        ratio = op_norm(diff) / (p.dim ** L * dist)
        k = int(np.argmax(ratio))
        table.append({"irrep": str(p), "dim": p.dim, "max_ratio": float(ratio[k])})
        if ratio[k] > best:
            best = float(ratio[k])
            witness = {"irrep": str(p), "x": int(xs[k]), "y": int(ys[k]), "distance": float(dist[k])}
    return RandomnessCertificate(
        L=L, C0_hat=best, witness=witness, D_max=D_max, pairs=pairs, seed=seed,
        per_irrep=table, divergent=best > DIVERGENCE_RATIO,
    )


def _su2_certificate(model, L, D_max, pairs, seed, torus_grid, matrix_checks):
    max_two_j = int(D_max) - 1
    x = model.haar_sample(seed, pairs)
    y = model.haar_sample(seed + 1, pairs)
    theta = np.concatenate([model.distance(x, y), su2_torus_grid(torus_grid)])
    theta = np.where(theta > 0, theta, np.nan)
    norms = _su2_torus_norms(max_two_j, np.nan_to_num(theta))
    best, witness, table = 0.0, None, []
    for n in range(max_two_j + 1):
        dim = n + 1
        ratio = norms[n] / (dim ** L * theta)
        ratio = np.nan_to_num(ratio, nan=0.0)
        k = int(np.argmax(ratio))
        table.append({"irrep": f"j={n / 2:g}", "dim": dim, "max_ratio": float(ratio[k])})
        if ratio[k] > best:
            best = float(ratio[k])
            src = "haar" if k < pairs else "torus"
            witness = {"irrep": f"j={n / 2:g}", "source": src, "distance": float(theta[k])}
            if src == "haar":
                witness["x"] = [float(v) for v in x[k]]
                witness["y"] = [float(v) for v in y[k]]
            else:
                witness["x"] = [float(v) for v in torus_element(theta[k])]
                witness["y"] = [1.0, 0.0, 0.0, 0.0]
    # explicit matrices on a few pairs confirm the spectral formula
    dev = 0.0
    m = min(matrix_checks, pairs)
    if m and max_two_j >= 1:
        for n in sorted({1, max_two_j // 2, max_two_j}):
            A = evaluate_irrep(model, IrrepLabel("su2", n, n + 1), x[:m])
            B = evaluate_irrep(model, IrrepLabel("su2", n, n + 1), y[:m])
            dev = max(dev, float(np.max(np.abs(op_norm(A - B) - norms[n, :m]))))
    return RandomnessCertificate(
        L=L, C0_hat=best, witness=witness, D_max=D_max, pairs=pairs, seed=seed,
        per_irrep=table, divergent=best > DIVERGENCE_RATIO, matrix_check=dev,
    )


def rep_metric(model: GroupModel, x, y, f: Callable[[int], float], D_max: float) -> float:
    """Truncated representation metric ``max_pi ||pi(x) - pi(y)|| / f(dim pi)``.

    Parameters
    ----------
    f : callable
        Weight on dimensions; must be strictly increasing on the catalog
        dimensions up to ``D_max``.

    Returns
    -------
    float
        A lower bound on ``d_{G,f}(x, y)``; it never exceeds ``2 / f(1)``.
    """
    labels = enumerate_irreps(model, D_max)
    dims = sorted({p.dim for p in labels})
    weights = [f(d) for d in dims]
    if any(b <= a for a, b in zip(weights, weights[1:])) or weights[0] <= 0:
        raise ValueError("weight function must be positive and strictly increasing on the dimensions")
    best = 0.0
    for p in labels:
        diff = evaluate_irrep(model, p, x) - evaluate_irrep(model, p, y)
        best = max(best, float(op_norm(diff)) / f(p.dim))
    return best


def _kernel_mask(model: _IndexModel, label: IrrepLabel, tol: float = 1e-9) -> np.ndarray:
    mats = finite_irreps(model.group)[label.key]
    eye = np.eye(label.dim)
    return np.max(np.abs(mats - eye), axis=(1, 2)) <= tol


def level(model: _IndexModel, label: IrrepLabel):
    """Level ``l(pi)``: inverse radius of the largest ball inside ``ker pi``.

    On a subgroup-ball model ``1_eta`` lies in the kernel exactly when
    ``eta`` is at most the smallest distance to the identity of an element
    outside the kernel, so the level is the inverse of that distance.

    Returns
    -------
    (float, bool)
        The level and a flag that is True for the trivial representation
        (level 0, no ball leaves the kernel).
    """
    if not isinstance(model, _IndexModel):
        raise TypeError("levels are defined on subgroup-ball models")
    ker = _kernel_mask(model, label)
    if ker.all():
        return 0.0, True
    dmin = float(np.min(model.dist_to_identity()[~ker]))
    return 1.0 / dmin, False


def image_size(model: _IndexModel, label: IrrepLabel) -> int:
    """``#pi(G) = [G : ker pi]``."""
    ker = _kernel_mask(model, label)
    return model.order // int(np.count_nonzero(ker))


@dataclass
class QuasiRandomReport:
    C: float
    A: float
    levels: List[dict]
    violations: List[dict]
    certified: bool
    varju_c: Optional[float]
    varju_alpha: Optional[float]
    varju_violations: List[dict]
    C1: Optional[float] = None
    d0: Optional[float] = None

    def as_dict(self):
        return dict(self.__dict__)


def certify_metric_quasirandom(model: _IndexModel, C: float, A: float,
                               C1: Optional[float] = None,
                               d0: Optional[float] = None) -> QuasiRandomReport:
    """Check ``l(pi) <= C dim(pi)^A`` over the catalog and derive Varju parameters.

    The Varju parameters are ``c = (C1 C^{d0})^{-1}`` and ``alpha = 1/(A d0)``;
    when ``C1`` and ``d0`` are not given they come from a dimension fit over
    the model's scales.  Each irreducible is then checked against
    ``dim(pi) >= c (#pi(G))^alpha`` and ``#pi(G) <= |1_{1/l(pi)}|^{-1}``.
    """
    if not isinstance(model, _IndexModel):
        raise TypeError("metric quasi-randomness needs a subgroup-ball model")
    labels = enumerate_irreps(model, 10 ** 9)
    if model.order == 1:
        return QuasiRandomReport(C, A, [], [], True, None, None, [], C1, d0)
    if C1 is None or d0 is None:
        d = model.dist_to_identity()
        rmin = float(np.min(d[d > 0]))
        grid = np.geomspace(rmin, min(0.99, model.diameter * 0.99), 12)
        fit = fit_dimension_condition(model, grid)
        C1 = fit.C1_hat if C1 is None else C1
        d0 = fit.d0_hat if d0 is None else d0
    rows, bad, vbad = [], [], []
    c = alpha = None
    if d0 > 1e-12:
        c = 1.0 / (C1 * C ** d0)
        alpha = 1.0 / (A * d0)
    for p in labels:
        lev, trivial = level(model, p)
        size = image_size(model, p)
        ball = model.ball_volume(1.0 / lev) if not trivial else 1.0
        row = {
            "irrep": str(p), "dim": p.dim, "level": lev, "trivial": trivial,
            "image_size": size, "ball_bound": 1.0 / ball,
            "image_bound_ok": bool(size <= 1.0 / ball * (1 + 1e-12)),
        }
        rows.append(row)
        if lev > C * p.dim ** A * (1 + 1e-12):
            bad.append(row)
        if c is not None and p.dim < c * size ** alpha * (1 - 1e-12):
            vbad.append(row)
    return QuasiRandomReport(C, A, rows, bad, not bad, c, alpha, vbad, C1, d0)


# ---------------------------------------------------------------------------
# scaled mixing inequalities


def mixing_sides(f: BandLimitedFunction, g: BandLimitedFunction, eta: float, L: float):
    """Both sides of ``||f*g||^2 <= 2 ||f_eta * g_eta||^2 + eta^(1/2L) ||f||^2 ||g||^2``."""
    lhs = convolve(f, g).norm2_sq()
    rhs = (2.0 * convolve(f.smooth(eta), g.smooth(eta)).norm2_sq()
           + eta ** (1.0 / (2 * L)) * f.norm2_sq() * g.norm2_sq())
    return lhs, rhs


def sup_norm_bound(f: BandLimitedFunction) -> float:
    """``sum_pi dim(pi) ||f^(pi)||_S1``, an upper bound for ``||f||_inf``."""
    total = 0.0
    for p, c in f.coeffs.items():
        total += p.dim * float(np.sum(np.linalg.svd(c, compute_uv=False)))
    return total


def _convolve_all(fs):
    out = fs[0]
    for h in fs[1:]:
        out = convolve(out, h)
    return out


@dataclass
class MixingReport:
    """Per-scale results of :func:`mixing_check`.

    Every row carries the scale, whether ``C0 sqrt(eta) <= 0.1`` holds, the
    number of violations and the smallest relative margin
    ``(rhs - lhs) / rhs`` of each inequality.
    """

    L: float
    C0: float
    d0: float
    D_max: float
    seed: int
    rows: List[dict]

    @property
    def violations(self) -> int:
        return int(sum(r["violations"] for r in self.rows))

    def as_dict(self) -> dict:
        return {"L": self.L, "C0": self.C0, "d0": self.d0, "D_max": self.D_max,
                "seed": self.seed, "violations": self.violations, "rows": self.rows}


def mixing_check(model: GroupModel, etas, L: float = 1.0, C0: float = 1.0, D_max: float = 25,
                 pairs: int = 200, m_values=(2, 3), tuples: int = 20, seed: int = 0,
                 d0: Optional[float] = None, C1: Optional[float] = None,
                 decay: float = 0.0) -> MixingReport:
    """Exact Fourier-side check of the scaled mixing inequality and its corollaries.

    For each ``eta``:

    * ``pairs`` random band-limited pairs (dimensions up to ``D_max``) are
      tested against ``||f*g||^2 <= 2||f_eta*g_eta||^2 + eta^(1/2L)||f||^2||g||^2``;
    * with ``eta' = eta^(1/(4 L d0))`` each ``f`` is tested against
      ``||(f - f_eta)_eta'|| <= eta^(1/8L) ||f||``;
    * for each ``m`` in ``m_values``, ``tuples`` random ``m``-tuples are tested
      against ``||(f1 - f1_eta)*f2*...*fm|| <= sqrt(3)^m eta'^(1/4L) prod ||fi||``
      and ``(m+1)``-tuples against the sup-norm bound
      ``||f1*...*f_{m+1} - (f1)_eta*...*(f_{m+1})_eta||_inf <= m sqrt(3)^m eta'^(1/4L) prod ||fi||``.
      The sup norm is bounded above by the nuclear-norm sum, so a sup-norm
      case only counts as a violation if that upper bound itself fails and
      is then reported as ``uncertified`` rather than as a violation.

    Preconditions are evaluated and recorded, never enforced here: the
    caller decides whether to skip scales with ``C0 sqrt(eta) > 0.1``.
    """
    if d0 is None or C1 is None:
        fit = reference_fit(model)
        d0 = fit.d0_hat if d0 is None else d0
        C1 = fit.C1_hat if C1 is None else C1
    labels = enumerate_irreps(model, D_max)
    rows = []
    for k, eta in enumerate(etas):
        eta = float(eta)
        rng = rng_stream(seed, k)
        viol = 0
        worst = math.inf
        worst64 = math.inf
        viol64 = 0
        etap = min(eta ** (1.0 / (4 * L * d0)), model.diameter)
        for _ in range(pairs):
            f = random_band_limited(model, labels, rng, decay)
            g = random_band_limited(model, labels, rng, decay)
            lhs, rhs = mixing_sides(f, g, eta, L)
            if lhs > rhs * (1 + 1e-12):
                viol += 1
            worst = min(worst, (rhs - lhs) / rhs if rhs > 0 else 0.0)
            # smoothing by eta' of f - f_eta
            lhs64 = (f - f.smooth(eta)).smooth(etap).norm2()
            rhs64 = eta ** (1.0 / (8 * L)) * f.norm2()
            if lhs64 > rhs64 * (1 + 1e-12):
                viol64 += 1
            worst64 = min(worst64, (rhs64 - lhs64) / rhs64 if rhs64 > 0 else 0.0)
        multi = []
        viol65 = 0
        for m in m_values:
            rng_m = rng_stream(seed, k, int(m))
            c65 = math.sqrt(3) ** m * etap ** (1.0 / (4 * L))
            v65 = v67 = unc67 = 0
            w65 = w67 = math.inf
            for _ in range(tuples):
                fs = [random_band_limited(model, labels, rng_m, decay) for _ in range(m + 1)]
                norms = [h.norm2() for h in fs]
                lhs65 = _convolve_all([fs[0] - fs[0].smooth(eta)] + fs[1:m]).norm2()
                rhs65 = c65 * math.prod(norms[:m])
                if lhs65 > rhs65 * (1 + 1e-12):
                    v65 += 1
                w65 = min(w65, (rhs65 - lhs65) / rhs65)
                diff = _convolve_all(fs) - _convolve_all([h.smooth(eta) for h in fs])
                ub = sup_norm_bound(diff)
                rhs67 = m * c65 * math.prod(norms)
                if ub > rhs67 * (1 + 1e-12):
                    unc67 += 1
                w67 = min(w67, (rhs67 - ub) / rhs67)
            viol65 += v65 + v67
            multi.append({"m": int(m), "tuples": tuples,
                          "l2_violations": v65, "l2_min_rel_margin": w65,
                          "sup_violations": v67, "sup_uncertified": unc67,
                          "sup_min_rel_margin": w67})
        pre = C0 * math.sqrt(eta) <= 0.1
        pre_p = C0 * math.sqrt(etap) < 0.1
        vol_ok = ball_volume(model, etap) >= etap ** d0 / C1
        rows.append({
            "eta": eta,
            "precondition": pre,
            "C0_sqrt_eta": C0 * math.sqrt(eta),
            "pairs": pairs,
            "violations": viol + viol64 + viol65,
            "mixing_violations": viol,
            "mixing_min_rel_margin": worst,
            "eta_prime": etap,
            "eta_prime_precondition": pre_p,
            "eta_prime_volume_ok": bool(vol_ok),
            "smoothing_violations": viol64,
            "smoothing_min_rel_margin": worst64,
            "multi": multi,
        })
    return MixingReport(float(L), float(C0), float(d0), float(D_max), int(seed), rows)
