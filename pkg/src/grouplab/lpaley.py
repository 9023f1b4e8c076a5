"""Scale ladders and Littlewood-Paley operators.

A ladder is a strictly decreasing list of radii ``eta_0 > eta_1 > ...``,
normally ``eta_i = eta0 ** (a ** i)``.  The operators are

    Delta_0 g = P_{eta_1} * g,
    Delta_i g = (P_{eta_{i+1}} - P_{eta_i}) * g      (i >= 1),

so the first ``n + 1`` components telescope to ``g_{eta_{n+1}}``.  On the
bundled models balls are conjugation invariant, every ``P_eta`` acts on the
``pi``-isotypic part as the scalar ``c_pi(eta)``, and each ``Delta_i`` is the
Fourier multiplier ``alpha_{i,pi}``.  The almost-orthogonality estimates then
reduce to arithmetic on multiplier tables, which is what this module does.

Ladder radii are stored as logarithms because ``eta0 ** (a ** i)`` leaves
double range after two or three steps.  A radius that underflows is treated
as 0, where ``P_0`` is the identity and ``c_pi(0) = 1``; the error this makes
is below ``1e-200``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .fourier import (
    AtomicMeasure,
    BandLimitedFunction,
    DensityVector,
    IrrepLabel,
    _apply_left,
    ball_multiplier,
    enumerate_irreps,
)
from .groups import GroupModel, ProfiniteModel, SU2Model, _IndexModel, reference_fit
from .scales import _coset_ids

__all__ = [
    "ScaleLadder",
    "LPComponent",
    "LPDecomposition",
    "OrthogonalityReport",
    "LivesAtScaleReport",
    "LocalizationReport",
    "default_ladder",
    "tower_ladder",
    "smooth",
    "lp_multiplier",
    "lp_component",
    "lp_project",
    "lp_decompose",
    "almost_orthogonality_matrix",
    "lives_at_scale",
    "localization_band",
    "living_band",
    "frequency_localization_check",
    "averaging_to_zero_table",
    "almost_invariance_table",
    "square_function_ratio",
    "SU2_TAIL_KAPPA",
]

#: |c_j(eta)| <= kappa / ((2j+1)^2 |1_eta|) for 2j+1 >= 2 (integration by parts)
SU2_TAIL_KAPPA = 4.0 / math.pi

#: smallest radius kept by :func:`default_ladder`
LADDER_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# ladders


@dataclass(frozen=True)
class ScaleLadder:
    """Radii ``eta_0 > eta_1 > ... > eta_{depth+1}``.

    ``depth`` is the index of the last LP component, so ``depth + 2`` radii
    are stored (component ``i`` needs ``eta_{i+1}``).

    Parameters
    ----------
    eta0 : float
        Base radius in ``(0, 1)``.
    a : float
        Ratio, ``eta_i = eta0 ** (a ** i)``.
    depth : int
        Last component index ``n``.
    log_scales : tuple of float, optional
        Explicit ``log(eta_i)``; overrides ``eta0``/``a`` (used for tower
        ladders whose radii are ``beta ** i``).
    """

    eta0: Optional[float]
    a: Optional[float]
    depth: int
    log_scales: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")
        if not self.log_scales:
            if self.eta0 is None or not 0 < self.eta0 < 1:
                raise ValueError("eta0 must lie in (0, 1)")
            if self.a is None or self.a <= 1:
                raise ValueError("a must exceed 1")
            logs = tuple(math.log(self.eta0) * self.a ** i for i in range(self.depth + 2))
            object.__setattr__(self, "log_scales", logs)
        if len(self.log_scales) != self.depth + 2:
            raise ValueError("need depth + 2 radii")
        if any(b >= c for c, b in zip(self.log_scales, self.log_scales[1:])):
            raise ValueError("ladder radii must be strictly decreasing")

    @property
    def scales(self) -> np.ndarray:
        """``eta_i`` as floats (0 where the radius underflows)."""
        return np.exp(np.array(self.log_scales))

    def eta(self, i: int) -> float:
        return float(math.exp(self.log_scales[i]))

    def eta_power(self, i: int, p: float) -> float:
        """``eta_i ** p`` evaluated through logarithms."""
        return float(math.exp(p * self.log_scales[i]))

    def check_gap_condition(self, L: float, d0: float) -> bool:
        """Warn unless ``a > max(4 L d0, 4 L + 2)``."""
        need = max(4 * L * d0, 4 * L + 2)
        ok = self.a is not None and self.a > need
        if not ok:
            warnings.warn(f"ladder ratio a={self.a} does not exceed max(4Ld0, 4L+2)={need:.4g}",
                          stacklevel=2)
        return ok

    def as_dict(self) -> dict:
        return {
            "eta0": self.eta0,
            "a": self.a,
            "depth": self.depth,
            "log_scales": list(self.log_scales),
        }


def default_ladder(model: GroupModel, L: float, eta0: float = 0.3,
                   d0: Optional[float] = None) -> ScaleLadder:
    """``a = ceil(max(4 L d0, 4 L + 2)) + 1`` and as many steps as keep ``eta_n >= 1e-12``.

    ``d0`` defaults to the reference dimension fit of ``model``.
    """
    if d0 is None:
        d0 = reference_fit(model).d0_hat
    a = math.ceil(max(4 * L * d0, 4 * L + 2)) + 1
    n = 0
    while math.log(eta0) * a ** (n + 1) >= math.log(LADDER_FLOOR):
        n += 1
    return ScaleLadder(eta0, float(a), n)


def tower_ladder(model: ProfiniteModel) -> ScaleLadder:
    """Radii ``beta ** i`` for ``i = 0 .. depth``, whose balls are ``N_0 .. N_depth``.

    With this ladder ``Delta_0`` projects onto ``N_1``-invariant functions and
    ``Delta_i`` onto ``H_{i+1} ⊖ H_i``; the residual vanishes because
    ``N_depth`` is trivial at the working depth.
    """
    if model.depth < 1:
        raise ValueError("tower needs depth >= 1")
    logs = tuple(i * math.log(model.beta) for i in range(model.depth + 1))
    return ScaleLadder(None, None, model.depth - 1, logs)


# ---------------------------------------------------------------------------
# smoothing and multipliers


def _multiplier(model: GroupModel, eta: float, label: IrrepLabel):
    if eta <= 0:
        return 1.0
    return ball_multiplier(model, eta, label)


def _defect(model: GroupModel, eta: float, label: IrrepLabel):
    """``1 - c_pi(eta)``, kept accurate on SU(2) when ``c_pi(eta)`` rounds to 1."""
    if eta <= 0:
        return 0.0
    if label.kind == "su2":
        n1 = label.key + 1
        if n1 * eta < 1e-4:
            return (n1 * n1 - 1) * eta * eta / 10.0
    return 1.0 - ball_multiplier(model, eta, label)


def _coset_average(model: _IndexModel, values: np.ndarray, eta: float) -> np.ndarray:
    """``(P_eta * g)(x)``: the mean of ``g`` over the coset ``x 1_eta``."""
    if eta <= 0:
        return values.copy()
    ids = _coset_ids(model, eta)
    counts = np.bincount(ids, minlength=model.order)
    sums = np.bincount(ids, weights=values.real, minlength=model.order)
    out = sums[ids] / counts[ids]
    if np.iscomplexobj(values):
        out = out + 1j * (np.bincount(ids, weights=values.imag, minlength=model.order)[ids] / counts[ids])
    return out


def smooth(g, eta: float):
    """``g_eta = P_eta * g`` for band-limited functions and densities.

    Balls on the bundled models are conjugation invariant, so left and right
    smoothing agree.  Atomic measures are converted to densities first.
    """
    if isinstance(g, AtomicMeasure):
        g = g.to_density()
    if isinstance(g, BandLimitedFunction):
        out = {p: _apply_left(_multiplier(g.model, eta, p), c) for p, c in g.coeffs.items()}
        return BandLimitedFunction(g.model, out)
    if isinstance(g, DensityVector):
        return DensityVector(g.model, _coset_average(g.model, np.asarray(g.values), eta))
    raise TypeError(f"cannot smooth {type(g).__name__}")


def lp_multiplier(model: GroupModel, ladder: ScaleLadder, i: int, label: IrrepLabel):
    """``alpha_{i,pi}``: ``c_pi(eta_1)`` for ``i = 0``, else ``c_pi(eta_{i+1}) - c_pi(eta_i)``."""
    _check_index(ladder, i)
    if i == 0:
        return _multiplier(model, ladder.eta(1), label)
    return _defect(model, ladder.eta(i), label) - _defect(model, ladder.eta(i + 1), label)


def _check_index(ladder, i):
    if not 0 <= i <= ladder.depth:
        raise IndexError(f"component {i} outside ladder depth {ladder.depth}")


@dataclass
class LPComponent:
    """Multiplier table ``alpha_{i,pi}`` of one LP operator."""

    index: int
    multipliers: Dict[IrrepLabel, float]

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(v))) for v in self.multipliers.values()), default=0.0)


def lp_component(model: GroupModel, ladder: ScaleLadder, i: int,
                 labels: Sequence[IrrepLabel]) -> LPComponent:
    return LPComponent(i, {p: lp_multiplier(model, ladder, i, p) for p in labels})


def lp_project(g, ladder: ScaleLadder, i: int):
    """``Delta_i(g)``.

    Band-limited input is multiplied coefficientwise by ``alpha_{i,pi}``.
    Densities on index models are smoothed exactly by coset averaging.
    """
    _check_index(ladder, i)
    if isinstance(g, AtomicMeasure):
        g = g.to_density()
    if isinstance(g, BandLimitedFunction):
        out = {p: _apply_left(lp_multiplier(g.model, ladder, i, p), c) for p, c in g.coeffs.items()}
        return BandLimitedFunction(g.model, out)
    hi = smooth(g, ladder.eta(i + 1))
    if i == 0:
        return hi
    lo = smooth(g, ladder.eta(i))
    return DensityVector(g.model, hi.values - lo.values)


def _norm2(g) -> float:
    return g.norm2()


def _sub(f, g):
    if isinstance(f, BandLimitedFunction):
        return f - g
    return DensityVector(f.model, f.values - g.values)


def _add(f, g):
    if isinstance(f, BandLimitedFunction):
        return f + g
    return DensityVector(f.model, f.values + g.values)


@dataclass
class LPDecomposition:
    """Components ``Delta_0 g .. Delta_n g``, ``g_{eta_{n+1}}`` and the residual."""

    components: list
    smoothed: object
    residual: object
    g_norm2: float

    @property
    def component_norms(self) -> List[float]:
        return [_norm2(c) for c in self.components]

    def partial_sum_error(self) -> float:
        """``||sum_i Delta_i g - g_{eta_{n+1}}||_2`` relative to ``||g||_2``."""
        total = self.components[0]
        for c in self.components[1:]:
            total = _add(total, c)
        return _norm2(_sub(total, self.smoothed)) / max(self.g_norm2, 1e-300)

    def square_function_ratio(self) -> float:
        """``sum_i ||Delta_i g||_2^2 / ||g||_2^2``."""
        return sum(x * x for x in self.component_norms) / self.g_norm2 ** 2


def lp_decompose(g, ladder: ScaleLadder) -> LPDecomposition:
    if isinstance(g, AtomicMeasure):
        g = g.to_density()
    comps = [lp_project(g, ladder, i) for i in range(ladder.depth + 1)]
    sm = smooth(g, ladder.eta(ladder.depth + 1))
    return LPDecomposition(comps, sm, _sub(g, sm), _norm2(g))


def square_function_ratio(g, ladder: ScaleLadder) -> float:
    """``sum_{i<=n} ||Delta_i g||^2 / ||g||^2``; lies in ``[1/(n+1), ...]`` when the residual vanishes."""
    return lp_decompose(g, ladder).square_function_ratio()


# ---------------------------------------------------------------------------
# almost orthogonality


@dataclass
class OrthogonalityReport:
    """``max_pi |alpha_{i,pi} alpha_{j,pi}|`` over an enumerated catalog.

    ``tail`` bounds the same quantity over irreps outside the catalog (zero
    when the catalog is complete); ``kappa`` is the constant used for it.
    """

    matrix: np.ndarray
    catalog_size: int
    complete: bool
    tail: np.ndarray
    kappa: Optional[float]

    def as_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "catalog_size": self.catalog_size,
            "complete": self.complete,
            "tail": self.tail.tolist(),
            "kappa": self.kappa,
        }


def _su2_tail_bound(eta: float, n1: int) -> float:
    """Bound on ``|c_j(eta)|`` for every ``2j + 1 >= n1 >= 2``."""
    if eta <= 0:
        return 1.0
    vol = (eta - math.sin(eta) * math.cos(eta)) / math.pi
    if vol <= 0:
        return 1.0
    return min(1.0, SU2_TAIL_KAPPA / (n1 * n1 * vol))


def almost_orthogonality_matrix(model: GroupModel, ladder: ScaleLadder,
                                D_max: float) -> OrthogonalityReport:
    """Operator norms ``||Delta_i Delta_j||`` restricted to irreps of dim ``<= D_max``.

    Raises
    ------
    NotImplementedError
        If some ball multiplier is not a scalar.
    """
    labels = enumerate_irreps(model, D_max)
    n = ladder.depth + 1
    table = np.zeros((n, len(labels)))
    for i in range(n):
        for k, p in enumerate(labels):
            v = lp_multiplier(model, ladder, i, p)
            if np.ndim(v) != 0:
                raise NotImplementedError("matrix-valued ball multipliers are unsupported")
            table[i, k] = abs(v)
    matrix = np.max(table[:, None, :] * table[None, :, :], axis=2) if labels else np.zeros((n, n))
    complete = not isinstance(model, SU2Model)
    tail = np.zeros((n, n))
    kappa = None
    if isinstance(model, SU2Model):
        kappa = SU2_TAIL_KAPPA
        first = int(math.floor(D_max)) + 1
        t = []
        for i in range(n):
            b = _su2_tail_bound(ladder.eta(i + 1), first)
            if i > 0:
                b += _su2_tail_bound(ladder.eta(i), first)
            t.append(b)
        t = np.array(t)
        tail = np.outer(t, t)
    return OrthogonalityReport(matrix, len(labels), complete, tail, kappa)


def averaging_to_zero_table(model: GroupModel, ladder: ScaleLadder, D_max: float) -> np.ndarray:
    """``T[i, j] = max_pi |alpha_{i,pi} c_pi(eta_j)|`` for ``i > j`` (else 0).

    This is the operator norm of ``g -> Delta_i(g)_{eta_j}`` on the catalog.
    """
    labels = enumerate_irreps(model, D_max)
    n = ladder.depth + 1
    T = np.zeros((n, n))
    for i in range(n):
        a = np.array([abs(lp_multiplier(model, ladder, i, p)) for p in labels])
        for j in range(i):
            c = np.array([abs(_multiplier(model, ladder.eta(j), p)) for p in labels])
            T[i, j] = float(np.max(a * c))
    return T


def almost_invariance_table(model: GroupModel, ladder: ScaleLadder, D_max: float) -> np.ndarray:
    """``T[i, k] = max_pi |alpha_{i,pi}| |c_pi(eta_k) - 1|`` for ``k > i + 1`` (else 0).

    ``k`` runs to ``depth + 1``; the norm of ``g -> Delta_i(g)_{eta_k} - Delta_i(g)``.
    """
    labels = enumerate_irreps(model, D_max)
    n = ladder.depth + 1
    T = np.zeros((n, n + 1))
    for i in range(n):
        a = np.array([abs(lp_multiplier(model, ladder, i, p)) for p in labels])
        for k in range(i + 2, n + 1):
            c = np.array([abs(_defect(model, ladder.eta(k), p)) for p in labels])
            T[i, k] = float(np.max(a * c))
    return T


# ---------------------------------------------------------------------------
# living at a scale


@dataclass
class LivesAtScaleReport:
    """Both inequalities for living at scale ``eta`` with their slacks.

    ``margins[0] = eta^(1/(2a)) ||f|| - ||f_{eta^(1/a)}||`` and
    ``margins[1] = eta^(a/2) ||f|| - ||f_{eta^(a^2)} - f||``; both are
    nonnegative exactly when ``passes``.
    """

    passes: bool
    margins: Tuple[float, float]
    averaging: float
    invariance: float
    norm: float

    def as_dict(self) -> dict:
        return {
            "passes": self.passes,
            "margins": list(self.margins),
            "averaging": self.averaging,
            "invariance": self.invariance,
            "norm": self.norm,
        }


def lives_at_scale(f, eta: float, a: float, tol: float = 1e-12) -> LivesAtScaleReport:
    """Evaluate both inequalities exactly (Fourier side or coset averaging).

    ``tol`` (relative to ``||f||``) absorbs rounding when an inequality holds
    with equality, as it does for exact projections on towers.
    """
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if a <= 1:
        raise ValueError("a must exceed 1")
    if isinstance(f, AtomicMeasure):
        f = f.to_density()
    nf = _norm2(f)
    if nf <= 0:
        raise ValueError("lives_at_scale needs a nonzero function")
    le = math.log(eta)
    avg = _norm2(smooth(f, math.exp(le / a)))
    inv = _norm2(_sub(smooth(f, math.exp(le * a * a)), f))
    m1 = math.exp(le / (2 * a)) * nf - avg
    m2 = math.exp(le * a / 2) * nf - inv
    passes = m1 >= -tol * nf and m2 >= -tol * nf
    return LivesAtScaleReport(bool(passes), (m1, m2), avg, inv, nf)


def localization_band(eta: float, a: float, L: float, C0: float, d0: float) -> Tuple[float, float]:
    """``I_eta = [eta^(-1/(L a)) / (2 C0), 2 C0 eta^(-d0 a^2)]`` (dimension range)."""
    le = math.log(eta)
    lo = math.exp(-le / (L * a)) / (2 * C0)
    hi_log = math.log(2 * C0) - d0 * a * a * le
    return lo, math.exp(min(hi_log, 700.0))


def living_band(eta: float, a: float, L: float, C0: float, C1: float, d0: float) -> Tuple[float, float]:
    """``I'_eta = [C1 eta^(-(d0+1)/a), C0^(-1/L) eta^((a - 2 a^2)/(2L))]``.

    Every band-limited function supported on irreps with dimension in this
    range lives at scale ``eta``.
    """
    le = math.log(eta)
    lo = C1 * math.exp(-(d0 + 1) / a * le)
    hi_log = -math.log(C0) / L + (a - 2 * a * a) / (2 * L) * le
    return lo, math.exp(min(hi_log, 700.0))


@dataclass
class LocalizationReport:
    band: Tuple[float, float]
    precondition: LivesAtScaleReport
    mass_fraction: Optional[float]
    bound: float
    passes: Optional[bool]

    def as_dict(self) -> dict:
        return {
            "band": list(self.band),
            "precondition": self.precondition.as_dict(),
            "mass_fraction": self.mass_fraction,
            "bound": self.bound,
            "passes": self.passes,
        }


def frequency_localization_check(f: BandLimitedFunction, eta: float, a: float, L: float,
                                 C0: float, C1: float, d0: float) -> LocalizationReport:
    """Fourier mass of ``f`` on irreps with dimension in ``I_eta``.

    When ``f`` does not live at scale ``eta`` the report carries the failed
    precondition and ``passes`` is ``None``.  ``C1`` is accepted for symmetry
    with :func:`living_band`; the band ``I_eta`` does not use it.
    """
    del C1
    band = localization_band(eta, a, L, C0, d0)
    bound = 1 - 8 * math.exp(math.log(eta) / (2 * a))
    pre = lives_at_scale(f, eta, a)
    if not pre.passes:
        return LocalizationReport(band, pre, None, bound, None)
    total = f.norm2_sq()
    inside = sum(p.dim * float(np.sum(np.abs(c) ** 2)) for p, c in f.coeffs.items()
                 if band[0] <= p.dim <= band[1])
    frac = inside / total
    return LocalizationReport(band, pre, frac, bound, bool(frac >= bound - 1e-12))
