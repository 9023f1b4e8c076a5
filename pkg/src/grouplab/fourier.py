"""Irreducible representations, Fourier coefficients and convolution.

Conventions
-----------
The Fourier coefficient of ``f`` at ``pi`` is ``f^(pi) = int f(g) pi(g)^* dg``
and convolution is ``(f * g)(x) = int f(y) g(y^{-1} x) dy``.  With these
choices the transform of a convolution reverses the order::

    (f * g)^(pi) = g^(pi) f^(pi)

Parseval reads ``||f||_2^2 = sum_pi dim(pi) ||f^(pi)||_HS^2`` and the inversion
formula is ``f(x) = sum_pi dim(pi) tr(f^(pi) pi(x))``.

On finite groups Haar measure is normalized counting measure, so a density
vector ``f`` has ``f^(pi) = |G|^{-1} sum_g f(g) pi(g)^*`` and a probability
measure ``mu`` corresponds to the density ``|G| mu``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np
from scipy import integrate

from .groups import (
    CyclicGroup,
    FiniteGroup,
    GroupModel,
    ProductModel,
    SU2Model,
    _IndexModel,
)

__all__ = [
    "CatalogUnavailable",
    "IrrepLabel",
    "BandLimitedFunction",
    "AtomicMeasure",
    "DensityVector",
    "FreqSplit",
    "BallMultiplier",
    "enumerate_irreps",
    "evaluate_irrep",
    "fourier_coeff",
    "fourier_transform",
    "ball_multiplier",
    "convolve",
    "freq_split",
    "synthesize",
    "su2_irrep",
    "su2_character",
    "su2_ball_multiplier",
    "ball_multipliers",
    "finite_irreps",
    "random_band_limited",
]

#: largest finite group whose irreducibles are computed on demand
CATALOG_MAX_ORDER = 1000
#: cyclic groups use closed-form characters and may be larger
CYCLIC_MAX_ORDER = 4096

#: default atom budget for SU(2) atomic convolutions
ATOM_BUDGET = 2 ** 16


class CatalogUnavailable(RuntimeError):
    """Raised when a model has no bundled irreducible catalog."""


# ---------------------------------------------------------------------------
# labels and containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class IrrepLabel:
    """Name of an irreducible representation.

    ``key`` is ``2j`` (an int) for SU(2), the catalog index for finite and
    profinite models, and a tuple of component labels for products.
    """

    kind: str
    key: object
    dim: int

    @property
    def spin(self) -> Fraction:
        if self.kind != "su2":
            raise AttributeError("spin is only defined for SU(2) labels")
        return Fraction(self.key, 2)

    @property
    def is_trivial(self) -> bool:
        if self.kind == "product":
            return all(c.is_trivial for c in self.key)
        return self.key == 0

    def __str__(self) -> str:
        if self.kind == "su2":
            return f"j={self.spin}"
        if self.kind == "product":
            return "(" + ",".join(str(c) for c in self.key) + ")"
        return f"{self.kind}#{self.key}"


@dataclass
class AtomicMeasure:
    """A probability measure given by weighted atoms.

    Parameters
    ----------
    model : GroupModel
    atoms : element batch
        Quaternion array, index array or tuple of component batches.
    weights : ndarray
        Positive weights summing to one.
    """

    model: GroupModel
    atoms: object
    weights: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w <= 0):
            raise ValueError("atom weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            w = w / w.sum()
        self.weights = w
        if self.symmetric and not self.is_symmetric():
            raise ValueError("measure flagged symmetric but atoms are not closed under inversion")

    def __len__(self):
        return len(self.weights)

    @classmethod
    def uniform(cls, model, atoms, symmetric=False):
        n = len(atoms[0]) if isinstance(atoms, tuple) else len(atoms)
        return cls(model, atoms, np.full(n, 1.0 / n), symmetric)

    @classmethod
    def delta(cls, model, g=None):
        g = model.identity() if g is None else g
        if isinstance(model, ProductModel):
            atoms = tuple(np.asarray(c)[None] for c in g)
        else:
            atoms = np.asarray(g)[None]
        return cls(model, atoms, np.ones(1))

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        """Check that inverting every atom leaves the measure unchanged."""
        if isinstance(self.model, _IndexModel):
            d = self.to_density().values
            inv = self.model.group.inv
            return bool(np.max(np.abs(d - d[inv])) <= tol * self.model.order)
        inv = self.model.inverse(self.atoms)
        for k in range(len(self)):
            here = self.model.take(self.atoms, k)
            there = self.model.take(inv, k)
            same = np.asarray(self.model.distance(self.atoms, _broadcast(here, self.model))) <= 1e-9
            mirror = np.asarray(self.model.distance(self.atoms, _broadcast(there, self.model))) <= 1e-9
            if abs(self.weights[same].sum() - self.weights[mirror].sum()) > tol:
                return False
        return True

    def to_density(self) -> "DensityVector":
        """Exact density on a finite group (mean one under Haar)."""
        if not isinstance(self.model, _IndexModel):
            raise TypeError("density vectors exist only on finite models")
        n = self.model.order
        vals = np.zeros(n)
        np.add.at(vals, np.asarray(self.atoms), self.weights)
        return DensityVector(self.model, vals * n)


def _broadcast(g, model):
    if isinstance(model, ProductModel):
        return tuple(np.asarray(c) for c in g)
    return np.asarray(g)


@dataclass
class DensityVector:
    """A function on a finite model, one value per element.

    Integrals use normalized counting measure, so a probability density has
    mean one.
    """

    model: GroupModel
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if not isinstance(self.model, _IndexModel):
            raise TypeError("density vectors need a finite model")
        if self.values.shape != (self.model.order,):
            raise ValueError("density vector has wrong length")

    @classmethod
    def constant(cls, model, c=1.0):
        return cls(model, np.full(model.order, float(c)))

    @classmethod
    def indicator(cls, model, subset):
        v = np.zeros(model.order)
        v[np.asarray(subset, dtype=np.int64)] = 1.0
        return cls(model, v)

    def integral(self) -> float:
        return float(np.mean(self.values))

    def norm2(self) -> float:
        """``||f||_2`` under normalized counting measure."""
        return float(np.sqrt(np.mean(np.abs(self.values) ** 2)))

    def norm1(self) -> float:
        return float(np.mean(np.abs(self.values)))

    def is_probability(self, tol: float = 1e-12) -> bool:
        return bool(np.all(self.values >= -tol) and abs(self.integral() - 1) <= tol)


@dataclass
class BandLimitedFunction:
    """An ``L^2`` function with finitely many nonzero Fourier coefficients."""

    model: GroupModel
    coeffs: Dict[IrrepLabel, np.ndarray] = field(default_factory=dict)

    def labels(self) -> List[IrrepLabel]:
        return sorted(self.coeffs)

    def norm2_sq(self) -> float:
        """``||f||_2^2`` by Parseval."""
        return float(sum(p.dim * np.sum(np.abs(c) ** 2) for p, c in self.coeffs.items()))

    def norm2(self) -> float:
        return math.sqrt(self.norm2_sq())

    def __add__(self, other):
        out = {p: c.copy() for p, c in self.coeffs.items()}
        for p, c in other.coeffs.items():
            out[p] = out[p] + c if p in out else c.copy()
        return BandLimitedFunction(self.model, out)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, s) -> "BandLimitedFunction":
        return BandLimitedFunction(self.model, {p: s * c for p, c in self.coeffs.items()})

    def smooth(self, eta: float) -> "BandLimitedFunction":
        """``f_eta = f * P_eta`` computed coefficientwise."""
        out = {}
        for p, c in self.coeffs.items():
            m = ball_multiplier(self.model, eta, p)
            out[p] = _apply_left(m, c)
        return BandLimitedFunction(self.model, out)

    def multiplier(self, fn) -> "BandLimitedFunction":
        """Multiply each coefficient by the scalar ``fn(label)``."""
        return BandLimitedFunction(self.model, {p: fn(p) * c for p, c in self.coeffs.items()})


def _apply_left(m, c):
    if np.ndim(m) == 0:
        return m * c
    return np.asarray(m) @ c


@dataclass
class FreqSplit:
    """Low/high frequency split of ``||f||_2^2`` at dimension threshold ``D``."""

    D: float
    low: float
    high: float

    @property
    def total(self) -> float:
        return self.low + self.high


@dataclass
class BallMultiplier:
    """Scalars ``c_pi(eta)`` with ``P_eta^(pi) = c_pi(eta) I``."""

    eta: float
    values: Dict[IrrepLabel, Union[float, np.ndarray]]


# ---------------------------------------------------------------------------
# SU(2)
# ---------------------------------------------------------------------------

def _spin_generator(n: int, X: np.ndarray) -> np.ndarray:
    """Derivative of the degree-``n`` polynomial representation at ``X``.

    The representation acts on homogeneous polynomials by
    ``(pi(U) P)(x, y) = P((x, y) U)``.  In the unitary monomial basis
    ``e_k = x^{n-k} y^k / sqrt((n-k)! k!)`` the derivative of this action along
    ``X = [[p, q], [r, s]]`` is tridiagonal.
    """
    p, q, r, s = X[..., 0, 0], X[..., 0, 1], X[..., 1, 0], X[..., 1, 1]
    k = np.arange(n + 1)
    out = np.zeros(X.shape[:-2] + (n + 1, n + 1), dtype=complex)
    out[..., k, k] = (n - k) * p[..., None] + k * s[..., None]
    if n:
        kk = np.arange(n)
        out[..., kk + 1, kk] = r[..., None] * np.sqrt((n - kk) * (kk + 1.0))
        out[..., kk, kk + 1] = q[..., None] * np.sqrt((n - kk) * (kk + 1.0))
    return out


def su2_irrep(two_j: int, q) -> np.ndarray:
    """Matrix of the spin ``j = two_j / 2`` representation.

    Parameters
    ----------
    two_j : int
        Twice the spin; the dimension is ``two_j + 1``.
    q : array_like
        Unit quaternion(s), shape ``(4,)`` or ``(m, 4)``.

    Returns
    -------
    ndarray
        Unitary matrices of shape ``(two_j + 1, two_j + 1)`` or
        ``(m, two_j + 1, two_j + 1)``.  On the torus element
        ``u(theta)`` the result is ``diag(e^{i 2 m theta})`` with ``m`` running
        from ``j`` down to ``-j``.

    Notes
    -----
    The matrix is ``exp`` of the polynomial-action derivative at ``log U``,
    computed through a Hermitian eigendecomposition.  This is unitary to
    machine precision for every spin, whereas expanding the polynomial
    action term by term loses all accuracy to cancellation near spin 50.
    """
    n = int(two_j)
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    sign = np.where(q[:, 0] < 0, -1.0, 1.0)
    q = q * sign[:, None]
    a, b, c, d = q.T
    vnorm = np.sqrt(b * b + c * c + d * d)
    theta = np.arctan2(vnorm, a)
    scale = np.where(vnorm > 1e-300, theta / np.where(vnorm > 0, vnorm, 1.0), 1.0)
    X = np.empty((len(q), 2, 2), dtype=complex)
    X[:, 0, 0] = 1j * b * scale
    X[:, 0, 1] = (c + 1j * d) * scale
    X[:, 1, 0] = (-c + 1j * d) * scale
    X[:, 1, 1] = -1j * b * scale
    H = -1j * _spin_generator(n, X)
    H = 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))
    w, V = np.linalg.eigh(H)
    out = (V * np.exp(1j * w)[:, None, :]) @ np.conj(np.swapaxes(V, -1, -2))
    if n % 2:
        out = out * sign[:, None, None]
    return out[0] if single else out


def su2_character(two_j: int, theta) -> np.ndarray:
    """``chi_j(theta) = sin((2j+1) theta) / sin(theta)`` with its limits."""
    theta = np.asarray(theta, dtype=float)
    n1 = two_j + 1
    s = np.sin(theta)
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.sin(n1 * theta) / s
    # near 0 and pi use the limit
    lim = n1 * np.where(np.cos(theta) > 0, 1.0, (-1.0) ** two_j)
    return np.where(np.abs(s) < 1e-12, lim, val)


def _x_minus_sin(x: float) -> float:
    """``x - sin(x)`` without cancellation for small ``x``."""
    if abs(x) > 0.5:
        return x - math.sin(x)
    # alternating series x^3/3! - x^5/5! + ...; terms fall below 1e-17 relative by k = 9
    term = x ** 3 / 6.0
    total = term
    x2 = x * x
    for k in range(1, 10):
        term *= -x2 / ((2 * k + 2) * (2 * k + 3))
        total += term
    return total


def _su2_ball_integral(n1: int, eta: float) -> float:
    """``int_0^eta sin(n1 t) sin(t) dt`` in a cancellation-free closed form.

    The antiderivative ``(sin((n-1)t)/(n-1) - sin((n+1)t)/(n+1)) / 2`` is
    rewritten through ``x - sin x`` so that tiny ``eta`` keeps full accuracy.
    """
    hi = _x_minus_sin((n1 + 1) * eta) / (n1 + 1)
    lo = _x_minus_sin((n1 - 1) * eta) / (n1 - 1) if n1 > 1 else 0.0
    return 0.5 * (hi - lo)


def su2_ball_multiplier(two_j: int, eta: float, method: str = "closed") -> float:
    """``c_j(eta)`` for the normalized ball indicator on SU(2).

    ``c_j(eta) = 2 / (pi (2j+1) |1_eta|) int_0^eta sin((2j+1)t) sin(t) dt``.

    Parameters
    ----------
    method : {"closed", "quad"}
        Closed-form antiderivative or adaptive Gauss-Kronrod quadrature
        (absolute error 1e-12), used as a cross-check.

    Notes
    -----
    ``eta = 0`` returns the limit 1, which is what a ladder scale that
    underflows double precision needs.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    n1 = two_j + 1
    if eta == 0 or n1 == 1:
        return 1.0
    eta = min(eta, math.pi)
    if n1 * eta < 1e-4:
        # next term is O((n1 eta)^4), below double precision here
        return 1.0 - (n1 * n1 - 1) * eta * eta / 10.0
    half_vol = _x_minus_sin(2 * eta)  # = 2 pi |1_eta|
    if method == "closed":
        integral = _su2_ball_integral(n1, eta)
    elif method == "quad":
        integral, _ = integrate.quad(
            lambda t: math.sin(n1 * t) * math.sin(t), 0.0, eta,
            epsabs=1e-13, epsrel=1e-13, limit=500,
        )
    else:
        raise ValueError(method)
    return 4.0 * integral / (n1 * half_vol)


# ---------------------------------------------------------------------------
# finite groups
# ---------------------------------------------------------------------------

def _cyclic_irreps(n):
    g = np.arange(n)
    # reduce k g mod n first so the angle stays in [0, 2 pi)
    return [np.exp(2j * np.pi * ((k * g) % n) / n)[:, None, None] for k in range(n)]


@lru_cache(maxsize=None)
def _finite_irreps_cached(group: FiniteGroup) -> tuple:
    n = group.order
    if isinstance(group, CyclicGroup) and n <= CYCLIC_MAX_ORDER:
        return tuple(_cyclic_irreps(n))
    if n > CATALOG_MAX_ORDER:
        raise CatalogUnavailable(
            f"no irreducible catalog for {group.name} (order {n} > {CATALOG_MAX_ORDER})"
        )
    for attempt in range(8):
        reps = _split_regular(group, seed=attempt)
        if reps is not None:
            return tuple(reps)
    raise RuntimeError(f"could not split the regular representation of {group.name}")


def _split_regular(group: FiniteGroup, seed: int):
    """Irreducibles of ``group`` from the left regular representation.

    A random Hermitian element of the right group algebra commutes with the
    left regular action, and for generic coefficients each of its eigenspaces
    is an irreducible left submodule.  Restricting the left action to an
    orthonormal basis of each eigenspace gives unitary irreducible matrices;
    one representative per character is kept.
    """
    n = group.order
    t = group.table
    inv = group.inv
    rng = np.random.default_rng(1000 + seed)
    c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    B = c[t[inv[:, None], np.arange(n)[None, :]]]
    A = B + B.conj().T
    w, V = np.linalg.eigh(A)
    spread = max(1.0, float(np.max(np.abs(w))))
    tol = 1e-7 * spread
    clusters, start = [], 0
    for k in range(1, n + 1):
        if k == n or w[k] - w[k - 1] > tol:
            clusters.append((start, k))
            start = k
    reps, chars = [], []
    perm = t[inv]  # perm[g, a] = g^{-1} a
    for lo, hi in clusters:
        Q = V[:, lo:hi]
        lifted = Q[perm]
        chi = np.einsum("ai,gai->g", Q.conj(), lifted)
        if abs(np.mean(np.abs(chi) ** 2) - 1.0) > 1e-6:
            return None
        if any(np.allclose(c0, chi, atol=1e-6) for c0 in chars):
            continue
        chars.append(chi)
        reps.append(np.einsum("ai,gaj->gij", Q.conj(), lifted))
        if sum(r.shape[1] ** 2 for r in reps) == n:
            break
    if sum(r.shape[1] ** 2 for r in reps) != n:
        return None
    # trivial first, then by dimension and character values for a stable order
    def sort_key(r):
        chi = np.trace(r, axis1=1, axis2=2)
        trivial = np.allclose(chi, 1.0)
        return (not trivial, r.shape[1], tuple(np.round(-chi.real, 6)), tuple(np.round(-chi.imag, 6)))

    reps.sort(key=sort_key)
    reps[0] = np.ones((n, 1, 1), dtype=complex)
    return reps


def finite_irreps(group: FiniteGroup) -> List[np.ndarray]:
    """Irreducible unitary matrices of a finite group.

    Returns
    -------
    list of ndarray
        Entry ``k`` has shape ``(|G|, d_k, d_k)`` with ``[g]`` the matrix of
        element ``g``; entry 0 is the trivial representation.
    """
    return list(_finite_irreps_cached(group))


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def enumerate_irreps(model: GroupModel, D_max: float) -> List[IrrepLabel]:
    """All catalog irreducibles of dimension at most ``D_max``.

    Parameters
    ----------
    model : GroupModel
    D_max : float
        Dimension cutoff, at least one.
    """
    if D_max < 1:
        raise ValueError("D_max must be at least 1")
    if isinstance(model, SU2Model):
        return [IrrepLabel("su2", n, n + 1) for n in range(int(D_max))]
    if isinstance(model, _IndexModel):
        reps = finite_irreps(model.group)
        return [IrrepLabel(model.kind, k, r.shape[1]) for k, r in enumerate(reps) if r.shape[1] <= D_max]
    if isinstance(model, ProductModel):
        out = [()]
        for f in model.factors:
            comp = enumerate_irreps(f, D_max)
            out = [t + (c,) for t in out for c in comp
                   if np.prod([x.dim for x in t]) * c.dim <= D_max]
        return [IrrepLabel("product", t, int(np.prod([x.dim for x in t]))) for t in out]
    raise CatalogUnavailable(f"no irreducible catalog for {model.kind} models")


def evaluate_irrep(model: GroupModel, label: IrrepLabel, g) -> np.ndarray:
    """Unitary matrix (or batch of matrices) ``pi(g)``."""
    if label.kind == "su2":
        if not isinstance(model, SU2Model):
            raise TypeError("SU(2) label used with a non-SU(2) model")
        return su2_irrep(label.key, model.validate(g))
    if label.kind == "product":
        if not isinstance(model, ProductModel):
            raise TypeError("product label used with a non-product model")
        mats = [evaluate_irrep(f, c, x) for f, c, x in zip(model.factors, label.key, g)]
        out = mats[0]
        for m in mats[1:]:
            out = np.einsum("...ij,...kl->...ikjl", out, m).reshape(
                out.shape[:-2] + (out.shape[-2] * m.shape[-2], out.shape[-1] * m.shape[-1])
            )
        return out
    if not isinstance(model, _IndexModel) or label.kind != model.kind:
        raise TypeError("label does not belong to this model")
    return finite_irreps(model.group)[label.key][np.asarray(g)]


def _adjoint(m):
    return np.conj(np.swapaxes(m, -1, -2))


def fourier_coeff(source, label: IrrepLabel) -> np.ndarray:
    """Fourier coefficient ``int f(g) pi(g)^* dg``.

    ``source`` may be an :class:`AtomicMeasure` (giving
    ``sum_i w_i pi(x_i)^*``), a :class:`DensityVector` (exact normalized sum)
    or a :class:`BandLimitedFunction` (stored coefficient).
    """
    if isinstance(source, BandLimitedFunction):
        c = source.coeffs.get(label)
        return np.zeros((label.dim, label.dim), dtype=complex) if c is None else c
    if isinstance(source, AtomicMeasure):
        mats = evaluate_irrep(source.model, label, source.atoms)
        return np.einsum("i,ijk->jk", source.weights, _adjoint(mats))
    if isinstance(source, DensityVector):
        mats = finite_irreps(source.model.group)[label.key]
        return np.einsum("g,gjk->jk", source.values, _adjoint(mats)) / source.model.order
    raise TypeError(f"cannot take Fourier coefficients of {type(source).__name__}")


def fourier_transform(source, D_max: float = math.inf) -> BandLimitedFunction:
    """All coefficients of a finite-group density up to ``D_max``."""
    model = source.model
    if D_max == math.inf:
        D_max = 10 ** 9
    labels = enumerate_irreps(model, D_max)
    return BandLimitedFunction(model, {p: fourier_coeff(source, p) for p in labels})


def ball_multiplier(model: GroupModel, eta: float, label: IrrepLabel):
    """``P_eta^(pi)``, returned as a scalar when balls are conjugation invariant.

    SU(2) uses the closed-form antiderivative of ``sin((2j+1)t) sin t``;
    subgroup-ball models return 0 or 1 according to kernel containment
    (computed as an exact average over the ball); products multiply the
    component scalars.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    if label.kind == "su2":
        return su2_ball_multiplier(label.key, eta)
    if label.kind == "product":
        vals = [ball_multiplier(f, eta, c) for f, c in zip(model.factors, label.key)]
        if all(np.ndim(v) == 0 for v in vals):
            return float(np.prod(vals))
        out = np.eye(1)
        for v, c in zip(vals, label.key):
            out = np.kron(out, v * np.eye(c.dim) if np.ndim(v) == 0 else v)
        return out
    ball = model.ball(eta) if hasattr(model, "ball") else np.flatnonzero(model.dist_to_identity() < eta)
    mats = finite_irreps(model.group)[label.key][ball]
    avg = _adjoint(mats).mean(axis=0)
    scalar = np.trace(avg) / label.dim
    if np.max(np.abs(avg - scalar * np.eye(label.dim))) <= 1e-10:
        # balls are normal subgroups here, so the average is 0 or I exactly
        snapped = round(float(np.real(scalar)))
        if snapped in (0, 1) and abs(scalar - snapped) <= 1e-9:
            return float(snapped)
        return float(np.real(scalar)) if abs(scalar.imag) < 1e-12 else complex(scalar)
    return avg


def ball_multipliers(model: GroupModel, eta: float, labels: Iterable[IrrepLabel]) -> BallMultiplier:
    return BallMultiplier(eta, {p: ball_multiplier(model, eta, p) for p in labels})


def _density_convolve(f: DensityVector, g: DensityVector) -> DensityVector:
    model = f.model
    n = model.order
    grp = model.group
    inv = grp.inv
    if n <= 4096:
        M = g.values[grp.table[inv][:, :]]  # M[y, x] = g(y^{-1} x)
        vals = f.values @ M / n
    else:
        vals = np.zeros(n, dtype=np.result_type(f.values, g.values))
        x = np.arange(n)
        for y in np.flatnonzero(f.values):
            vals += f.values[y] * g.values[grp.mul(inv[y], x)]
        vals /= n
    return DensityVector(model, vals)


def _measure_on_density(mu: AtomicMeasure, f: DensityVector) -> DensityVector:
    # (mu * f)(x) = sum_i w_i f(x_i^{-1} x)
    grp = f.model.group
    x = np.arange(grp.order)
    vals = np.zeros(grp.order, dtype=f.values.dtype)
    for a, w in zip(np.asarray(mu.atoms), mu.weights):
        vals += w * f.values[grp.mul(grp.inv[a], x)]
    return DensityVector(f.model, vals)


def _atomic_convolve(mu: AtomicMeasure, nu: AtomicMeasure, budget: int, seed: int) -> AtomicMeasure:
    model = mu.model
    if isinstance(model, _IndexModel):
        a = np.asarray(mu.atoms)
        b = np.asarray(nu.atoms)
        prod = model.group.mul(a[:, None], b[None, :]).ravel()
        w = np.outer(mu.weights, nu.weights).ravel()
        vals = np.zeros(model.order)
        np.add.at(vals, prod, w)
        support = np.flatnonzero(vals > 0)
        return AtomicMeasure(model, support, vals[support], symmetric=False)
    m, k = len(mu), len(nu)
    if m * k <= budget:
        i, j = np.meshgrid(np.arange(m), np.arange(k), indexing="ij")
        i, j = i.ravel(), j.ravel()
        w = mu.weights[i] * nu.weights[j]
    else:
        rng = np.random.default_rng(seed)
        i = rng.choice(m, size=budget, p=mu.weights)
        j = rng.choice(k, size=budget, p=nu.weights)
        w = np.full(budget, 1.0 / budget)
    atoms = model.multiply(model.take(mu.atoms, i), model.take(nu.atoms, j))
    return AtomicMeasure(model, atoms, w)


def convolve(f, g, budget: int = ATOM_BUDGET, seed: int = 0):
    """Convolution ``f * g``.

    Band-limited inputs combine coefficientwise as ``g^(pi) f^(pi)``;
    densities on finite groups are convolved exactly; atomic measures give
    the product-support measure.  On SU(2) the product support is replaced
    by ``budget`` i.i.d. seeded draws once it would exceed the budget.
    An atomic measure acting on a density gives ``mu * f``.
    """
    if f.model is not g.model and f.model.spec() != g.model.spec():
        raise ValueError("convolution of functions on different models")
    if isinstance(f, BandLimitedFunction) and isinstance(g, BandLimitedFunction):
        out = {}
        for p in set(f.coeffs) & set(g.coeffs):
            out[p] = g.coeffs[p] @ f.coeffs[p]
        return BandLimitedFunction(f.model, out)
    if isinstance(f, DensityVector) and isinstance(g, DensityVector):
        return _density_convolve(f, g)
    if isinstance(f, AtomicMeasure) and isinstance(g, AtomicMeasure):
        return _atomic_convolve(f, g, budget, seed)
    if isinstance(f, AtomicMeasure) and isinstance(g, DensityVector):
        return _measure_on_density(f, g)
    if isinstance(f, DensityVector) and isinstance(g, AtomicMeasure):
        return _density_convolve(f, g.to_density())
    raise TypeError(f"cannot convolve {type(f).__name__} with {type(g).__name__}")


def freq_split(f, D: float) -> FreqSplit:
    """``L(f; D) = sum_{dim pi <= D} dim pi ||f^(pi)||^2`` and the remainder."""
    if D < 1:
        raise ValueError("D must be at least 1")
    if isinstance(f, DensityVector):
        f = fourier_transform(f)
    low = high = 0.0
    for p, c in f.coeffs.items():
        e = p.dim * float(np.sum(np.abs(c) ** 2))
        if p.dim <= D:
            low += e
        else:
            high += e
    return FreqSplit(D, low, high)


def synthesize(f: BandLimitedFunction, x) -> np.ndarray:
    """Evaluate ``f(x) = sum_pi dim pi tr(f^(pi) pi(x))``."""
    total = 0.0
    for p, c in f.coeffs.items():
        mats = evaluate_irrep(f.model, p, x)
        total = total + p.dim * np.einsum("ij,...ji->...", c, mats)
    return total


def random_band_limited(model: GroupModel, labels: Sequence[IrrepLabel], rng,
                        decay: float = 0.0) -> BandLimitedFunction:
    """Band-limited function with i.i.d. complex Gaussian coefficients.

    Coefficient entries at ``pi`` are scaled by ``dim(pi)**(-decay)``.
    """
    coeffs = {}
    for p in labels:
        c = rng.standard_normal((p.dim, p.dim)) + 1j * rng.standard_normal((p.dim, p.dim))
        coeffs[p] = c * p.dim ** (-decay)
    return BandLimitedFunction(model, coeffs)
