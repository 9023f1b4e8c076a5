"""Concrete compact-group models.

Every model exposes the same small contract: an identity, multiplication and
inversion on (batches of) elements, a bi-invariant metric, Haar sampling and
the Haar volume of open balls ``1_eta = {x : d(x, 1) < eta}``.

Element encodings
-----------------
* ``su2``: unit quaternions ``(a, b, c, d)`` stored as float arrays of shape
  ``(..., 4)``.  The quaternion ``a + bi + cj + dk`` corresponds to the matrix
  ``[[a + ib, c + id], [-c + id, a - ib]]``.
* finite and profinite models: integer indices into the element list of the
  group at the working depth (numpy integer arrays).
* ``torus``: floats in ``[0, 1)``.
* ``product``: tuples holding one component element per factor.

Profinite towers carry the congruence filtration ``G = N_0 > N_1 > ... > N_n``
with ``N_k`` the kernel of reduction to level ``k``.  The metric is
``d(g, h) = beta**(k + 1)`` where ``k`` is the deepest level at which ``g`` and
``h`` have the same image, so that the open ball of radius ``beta**k`` is the
subgroup ``N_k`` and the ball of radius one is the whole group.
"""
from __future__ import annotations

import math
import re
from functools import cached_property, lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "GroupModel",
    "SU2Model",
    "TorusModel",
    "FiniteGroup",
    "FiniteModel",
    "ProfiniteModel",
    "QuotientModel",
    "ProductModel",
    "DimensionFit",
    "su2",
    "torus",
    "finite",
    "profinite",
    "product_model",
    "quotient_model",
    "su2_distance",
    "ball_volume",
    "haar_sample",
    "fit_dimension_condition",
    "reference_fit",
    "omega",
    "parse_model",
    "quat_mul",
    "quat_inv",
    "quat_to_matrix",
    "torus_element",
    "rng_stream",
]


def rng_stream(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator (Philox) for task ``stream`` of run ``seed``.

    Streams with different indices are independent, so work split across
    tasks draws the same numbers whatever the execution order.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


# ---------------------------------------------------------------------------
# quaternion helpers
# ---------------------------------------------------------------------------

def quat_mul(p, q):
    """Hamilton product of quaternion arrays of shape ``(..., 4)``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    a1, b1, c1, d1 = np.moveaxis(p, -1, 0)
    a2, b2, c2, d2 = np.moveaxis(q, -1, 0)
    out = np.stack(
        [
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ],
        axis=-1,
    )
    return _renormalize(out)


def quat_inv(q):
    """Inverse (conjugate) of unit quaternions."""
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def _renormalize(q):
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_to_matrix(q) -> np.ndarray:
    """Return the ``2 x 2`` special unitary matrix of a unit quaternion."""
    q = np.asarray(q, dtype=float)
    a, b, c, d = np.moveaxis(q, -1, 0)
    m = np.empty(q.shape[:-1] + (2, 2), dtype=complex)
    m[..., 0, 0] = a + 1j * b
    m[..., 0, 1] = c + 1j * d
    m[..., 1, 0] = -c + 1j * d
    m[..., 1, 1] = a - 1j * b
    return m


def torus_element(theta) -> np.ndarray:
    """The maximal-torus element ``u(theta) = diag(e^{i theta}, e^{-i theta})``."""
    theta = np.asarray(theta, dtype=float)
    z = np.zeros_like(theta)
    return np.stack([np.cos(theta), np.sin(theta), z, z], axis=-1)


def _quat_angle(g, h):
    # angle between unit vectors, stable near 0 and pi
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    num = np.linalg.norm(g - h, axis=-1)
    den = np.linalg.norm(g + h, axis=-1)
    return 2.0 * np.arctan2(num, den)


# ---------------------------------------------------------------------------
# base class
# ---------------------------------------------------------------------------

class GroupModel:
    """Common interface of the bundled compact-group models.

    Attributes
    ----------
    kind : str
        One of ``su2``, ``torus``, ``finite``, ``profinite``, ``quotient``,
        ``product``.
    diameter : float
        Radius at which the open ball around the identity is the whole group.
    conjugation_invariant_balls : bool
        True when every ball ``1_eta`` is a union of conjugacy classes, so
        that ball averaging acts on each irreducible by a scalar.
    """

    kind: str = "abstract"
    diameter: float = 1.0
    conjugation_invariant_balls: bool = True
    name: str = ""

    # -- algebra ------------------------------------------------------------
    def identity(self):
        raise NotImplementedError

    def multiply(self, g, h):
        raise NotImplementedError

    def inverse(self, g):
        raise NotImplementedError

    # -- geometry -----------------------------------------------------------
    def distance(self, g, h):
        raise NotImplementedError

    def ball_volume(self, eta: float) -> float:
        raise NotImplementedError

    def haar_sample(self, seed: int, n: int):
        raise NotImplementedError

    def subgroup_balls(self) -> bool:
        """True when every ball around the identity is a subgroup."""
        return False

    # -- helpers ------------------------------------------------------------
    def take(self, elements, idx):
        """Select entries of a batch of elements."""
        return elements[idx]

    def spec(self) -> str:
        return self.name

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.spec()}>"


def _check_eta(eta):
    if not eta > 0:
        raise ValueError(f"ball radius must be positive, got {eta}")


# ---------------------------------------------------------------------------
# SU(2)
# ---------------------------------------------------------------------------

class SU2Model(GroupModel):
    """SU(2) as unit quaternions with the geodesic-angle metric.

    ``d(g, h)`` is the angle ``theta`` in ``[0, pi]`` for which ``g h^{-1}``
    has eigenvalues ``e^{+-i theta}``.
    """

    kind = "su2"
    diameter = math.pi
    conjugation_invariant_balls = True
    name = "su2"

    def identity(self):
        return np.array([1.0, 0.0, 0.0, 0.0])

    def multiply(self, g, h):
        return quat_mul(g, h)

    def inverse(self, g):
        return quat_inv(g)

    def distance(self, g, h):
        return _quat_angle(g, h)

    def angle(self, g):
        """Conjugacy-class angle ``d(g, 1)``."""
        return _quat_angle(g, self.identity())

    def ball_volume(self, eta: float) -> float:
        _check_eta(eta)
        if eta >= math.pi:
            return 1.0
        return (eta - math.sin(eta) * math.cos(eta)) / math.pi

    def haar_sample(self, seed: int, n: int):
        if n < 1:
            raise ValueError("n must be at least 1")
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, 4))
        return _renormalize(x)

    def validate(self, g):
        g = np.asarray(g, dtype=float)
        if g.shape[-1] != 4:
            raise TypeError("SU(2) elements are quaternions of shape (..., 4)")
        return g


def su2_distance(g, h):
    """Geodesic angle between two SU(2) elements.

    Parameters
    ----------
    g, h : array_like
        Unit quaternions, shape ``(4,)`` or ``(n, 4)``.

    Returns
    -------
    float or ndarray
        ``arccos Re(g h^{-1})`` in ``[0, pi]``.
    """
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    if g.shape[-1:] != (4,) or h.shape[-1:] != (4,):
        raise TypeError("su2_distance expects unit quaternions")
    out = _quat_angle(g, h)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# torus R/Z (negative control for the dimension fit)
# ---------------------------------------------------------------------------

class TorusModel(GroupModel):
    """The circle ``R/Z`` with arc-length metric; ``|1_eta| = 2 eta``."""

    kind = "torus"
    diameter = 0.5
    conjugation_invariant_balls = True
    name = "torus"

    def identity(self):
        return np.float64(0.0)

    def multiply(self, g, h):
        return np.mod(np.asarray(g) + np.asarray(h), 1.0)

    def inverse(self, g):
        return np.mod(-np.asarray(g), 1.0)

    def distance(self, g, h):
        t = np.mod(np.asarray(g) - np.asarray(h), 1.0)
        return np.minimum(t, 1.0 - t)

    def ball_volume(self, eta: float) -> float:
        _check_eta(eta)
        return min(2.0 * eta, 1.0)

    def haar_sample(self, seed: int, n: int):
        if n < 1:
            raise ValueError("n must be at least 1")
        return np.random.default_rng(seed).random(n)


# ---------------------------------------------------------------------------
# finite groups
# ---------------------------------------------------------------------------

class FiniteGroup:
    """A finite group with elements numbered ``0 .. order-1``.

    Subclasses implement vectorized multiplication on index arrays.  The
    identity always has index 0.
    """

    name = ""
    abelian = False

    def __init__(self, order: int):
        self.order = int(order)

    def mul(self, i, j):
        raise NotImplementedError

    @cached_property
    def inv(self) -> np.ndarray:
        """Inverse table, found from the multiplication."""
        n = self.order
        out = np.empty(n, dtype=np.int64)
        if n <= 4096:
            t = self.table
            rows, cols = np.nonzero(t == 0)
            out[rows] = cols
        else:
            out[:] = self._inverse_fallback()
        return out

    def _inverse_fallback(self):
        raise NotImplementedError

    @cached_property
    def table(self) -> np.ndarray:
        """Full Cayley table ``table[i, j] = i * j`` (only for small groups)."""
        n = self.order
        if n > 4096:
            raise MemoryError(f"Cayley table of a group of order {n} is not materialized")
        i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        return np.asarray(self.mul(i, j), dtype=np.int64)

    def label(self, i) -> str:
        return str(int(i))

    def generate(self, gens: Sequence[int]) -> np.ndarray:
        """Sorted indices of the subgroup generated by ``gens``."""
        seen = np.zeros(self.order, dtype=bool)
        seen[0] = True
        frontier = np.array([0], dtype=np.int64)
        gens = np.asarray(list(gens), dtype=np.int64)
        while frontier.size:
            prod = self.mul(frontier[:, None], gens[None, :]).ravel()
            prod = np.unique(prod)
            new = prod[~seen[prod]]
            seen[new] = True
            frontier = new
        return np.flatnonzero(seen)

    def __repr__(self):
        return f"<FiniteGroup {self.name} order={self.order}>"


class CyclicGroup(FiniteGroup):
    """``Z/n`` with element ``i`` the residue ``i``."""

    abelian = True

    def __init__(self, n: int):
        super().__init__(n)
        self.n = int(n)
        self.name = f"z{n}"

    def mul(self, i, j):
        return np.mod(np.asarray(i) + np.asarray(j), self.n)

    @cached_property
    def inv(self):
        return np.mod(-np.arange(self.n), self.n)


class TableGroup(FiniteGroup):
    """A finite group given by a list of raw elements and a binary operation."""

    def __init__(self, name: str, elements: list, op: Callable, identity):
        elements = list(elements)
        elements.remove(identity)
        elements.insert(0, identity)
        super().__init__(len(elements))
        self.name = name
        self.raw = elements
        index = {e: k for k, e in enumerate(elements)}
        n = len(elements)
        t = np.empty((n, n), dtype=np.int64)
        for a in range(n):
            for b in range(n):
                t[a, b] = index[op(elements[a], elements[b])]
        self.__dict__["table"] = t
        self.abelian = bool(np.array_equal(t, t.T))

    def mul(self, i, j):
        return self.table[np.asarray(i), np.asarray(j)]

    def label(self, i):
        return str(self.raw[int(i)])


class SL2ModGroup(FiniteGroup):
    """``SL_2(Z/m)`` with elements stored as integer 2x2 matrices.

    Products are computed by modular arithmetic followed by a code lookup, so
    the Cayley table never needs to be materialized for large ``m``.
    """

    def __init__(self, m: int):
        m = int(m)
        self.m = m
        r = np.arange(m)
        a, b, c, d = np.meshgrid(r, r, r, r, indexing="ij")
        a, b, c, d = (x.ravel() for x in (a, b, c, d))
        keep = np.mod(a * d - b * c, m) == (1 % m)
        mats = np.stack([a[keep], b[keep], c[keep], d[keep]], axis=1)
        codes = self._code(mats)
        ident = self._code(np.array([[1 % m, 0, 0, 1 % m]]))[0]
        order = np.argsort(codes != ident, kind="stable")
        mats = mats[order]
        codes = codes[order]
        super().__init__(len(mats))
        self.name = f"sl2z{m}"
        self.mats = mats
        self.lookup = np.full(m ** 4, -1, dtype=np.int64)
        self.lookup[codes] = np.arange(len(mats))

    def _code(self, mats):
        m = self.m
        return ((mats[..., 0] * m + mats[..., 1]) * m + mats[..., 2]) * m + mats[..., 3]

    def mul(self, i, j):
        x = self.mats[np.asarray(i)]
        y = self.mats[np.asarray(j)]
        m = self.m
        out = np.stack(
            [
                x[..., 0] * y[..., 0] + x[..., 1] * y[..., 2],
                x[..., 0] * y[..., 1] + x[..., 1] * y[..., 3],
                x[..., 2] * y[..., 0] + x[..., 3] * y[..., 2],
                x[..., 2] * y[..., 1] + x[..., 3] * y[..., 3],
            ],
            axis=-1,
        ) % m
        return self.lookup[self._code(out)]

    @cached_property
    def inv(self):
        x = self.mats
        m = self.m
        out = np.stack([x[:, 3], (-x[:, 1]) % m, (-x[:, 2]) % m, x[:, 0]], axis=1)
        return self.lookup[self._code(out)]

    def index_of(self, mats) -> np.ndarray:
        """Indices of integer matrices given as ``(..., 4)`` arrays (entries reduced mod m)."""
        mats = np.mod(np.asarray(mats, dtype=np.int64), self.m)
        idx = self.lookup[self._code(mats)]
        if np.any(idx < 0):
            raise ValueError("matrix not in SL_2")
        return idx

    def label(self, i):
        a, b, c, d = self.mats[int(i)]
        return f"[[{a},{b}],[{c},{d}]]"


def _perm_compose(p, q):
    # (p * q)(x) = p(q(x))
    return tuple(p[q[x]] for x in range(len(q)))


def _quaternion_units():
    units = []
    for s in (1, -1):
        for k in range(4):
            v = [0, 0, 0, 0]
            v[k] = s
            units.append(tuple(v))

    def op(p, q):
        a1, b1, c1, d1 = p
        a2, b2, c2, d2 = q
        return (
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        )

    return units, op


@lru_cache(maxsize=None)
def finite_group(name: str) -> FiniteGroup:
    """Look up a bundled finite group by catalog name.

    Names: ``z<n>`` (cyclic), ``trivial``, ``s3``, ``q8``, ``sl2f<p>`` for a
    prime ``p`` and ``sl2z<m>`` for ``SL_2(Z/m)``.
    """
    key = name.lower()
    if key == "trivial":
        return CyclicGroup(1)
    m = re.fullmatch(r"z(\d+)", key)
    if m:
        return CyclicGroup(int(m.group(1)))
    if key == "s3":
        import itertools

        perms = list(itertools.permutations(range(3)))
        g = TableGroup("s3", perms, _perm_compose, (0, 1, 2))
        return g
    if key == "q8":
        units, op = _quaternion_units()
        return TableGroup("q8", units, op, (1, 0, 0, 0))
    m = re.fullmatch(r"sl2f(\d+)", key)
    if m:
        p = int(m.group(1))
        g = SL2ModGroup(p)
        g.name = key
        return g
    m = re.fullmatch(r"sl2z(\d+)", key)
    if m:
        return SL2ModGroup(int(m.group(1)))
    raise KeyError(f"unknown finite group {name!r}")


FINITE_CATALOG = ("z5", "z101", "s3", "q8", "sl2f3", "sl2f5", "sl2f7")


class _IndexModel(GroupModel):
    """Shared machinery for models whose elements are integer indices."""

    group: FiniteGroup

    def identity(self):
        return np.int64(0)

    def multiply(self, g, h):
        return self.group.mul(g, h)

    def inverse(self, g):
        return self.group.inv[np.asarray(g)]

    def haar_sample(self, seed: int, n: int):
        if n < 1:
            raise ValueError("n must be at least 1")
        rng = np.random.default_rng(seed)
        return rng.integers(0, self.group.order, size=n)

    @property
    def order(self) -> int:
        return self.group.order

    def elements(self) -> np.ndarray:
        return np.arange(self.group.order)

    def subgroup_balls(self) -> bool:
        return True

    def dist_to_identity(self) -> np.ndarray:
        """``d(x, 1)`` for every element ``x``."""
        raise NotImplementedError

    def distance(self, g, h):
        x = self.multiply(g, self.inverse(h))
        return self.dist_to_identity()[x]


class FiniteModel(_IndexModel):
    """A finite group as a one-level tower ``G = N_0 > N_1 = {1}``.

    Distinct elements are at distance ``beta``; balls of radius at most
    ``beta`` are singletons and the ball of radius one is the whole group.
    """

    kind = "finite"
    diameter = 1.0

    def __init__(self, group: FiniteGroup, beta: float = 0.5):
        self.group = group
        self.beta = float(beta)
        self.name = f"finite:{group.name}"

    @cached_property
    def _dist(self):
        d = np.full(self.group.order, self.beta)
        d[0] = 0.0
        return d

    def dist_to_identity(self):
        return self._dist

    def ball_volume(self, eta: float) -> float:
        _check_eta(eta)
        if eta > self.beta:
            return 1.0
        return 1.0 / self.group.order

    def ball(self, eta: float) -> np.ndarray:
        return np.flatnonzero(self._dist < eta)


def finite(name: str, beta: float = 0.5) -> FiniteModel:
    """Finite model from the bundled catalog."""
    return FiniteModel(finite_group(name), beta=beta)


# ---------------------------------------------------------------------------
# profinite towers
# ---------------------------------------------------------------------------

class ProfiniteModel(_IndexModel):
    """A congruence tower truncated at a working depth.

    Parameters
    ----------
    levels : list of FiniteGroup
        ``levels[k]`` is ``G/N_k`` for ``k = 0 .. depth`` (``levels[0]`` is
        trivial).
    proj : list of ndarray
        ``proj[k][x]`` is the image in ``levels[k]`` of the depth element ``x``.
    beta : float
        Base scale; ``1_{beta**k} = N_k``.
    """

    kind = "profinite"
    diameter = 1.0

    def __init__(self, name: str, levels: list, proj: list, beta: float = 0.5):
        self.levels = levels
        self.proj = proj
        self.group = levels[-1]
        self.depth = len(levels) - 1
        self.beta = float(beta)
        self.catalog = name
        self.name = f"profinite:{name}:depth={self.depth}:beta={_fmt(self.beta)}"

    @cached_property
    def indices(self) -> list:
        """``[G:N_k]`` for ``k = 0 .. depth``."""
        return [g.order for g in self.levels]

    @cached_property
    def agreement_level(self) -> np.ndarray:
        """Deepest level ``k`` with ``x`` in ``N_k``, per element."""
        n = self.group.order
        k = np.zeros(n, dtype=np.int64)
        for lev in range(1, self.depth + 1):
            k[self.proj[lev] == 0] = lev
        return k

    @cached_property
    def _dist(self):
        k = self.agreement_level
        d = self.beta ** (k + 1.0)
        d[k == self.depth] = 0.0
        return d

    def dist_to_identity(self):
        return self._dist

    def level_of_radius(self, eta: float) -> int:
        """Level ``k`` with ``1_eta = N_k``."""
        _check_eta(eta)
        if eta > self.beta:
            return 0
        # eta in (beta^{k+1}, beta^k]  ->  N_k
        k = int(math.floor(math.log(eta) / math.log(self.beta) + 1e-12))
        if self.beta ** k < eta * (1 - 1e-12):
            k -= 1
        return min(max(k, 0), self.depth)

    def ball_volume(self, eta: float) -> float:
        k = self.level_of_radius(eta)
        return 1.0 / self.indices[k]

    def ball(self, eta: float) -> np.ndarray:
        return self.congruence_subgroup(self.level_of_radius(eta))

    def congruence_subgroup(self, k: int) -> np.ndarray:
        """Indices of ``N_k`` at the working depth."""
        return np.flatnonzero(self.proj[k] == 0)

    def residues(self, g) -> tuple:
        """Residue vector ``(image in G/N_1, ..., image in G/N_depth)``."""
        g = int(g)
        return tuple(int(self.proj[k][g]) for k in range(1, self.depth + 1))

    def from_residues(self, res: Sequence[int]) -> int:
        res = [int(r) for r in res]
        if len(res) != self.depth:
            raise ValueError(f"expected {self.depth} residues, got {len(res)}")
        g = res[-1]
        if tuple(res) != self.residues(g):
            raise ValueError("residue vector inconsistent under tower projections")
        return g


def _fmt(x: float) -> str:
    return f"{x:g}"


@lru_cache(maxsize=None)
def _sl2_tower(p: int, depth: int):
    levels = [CyclicGroup(1)] + [SL2ModGroup(p ** k) for k in range(1, depth + 1)]
    top = levels[-1]
    proj = [np.zeros(top.order, dtype=np.int64)]
    for k in range(1, depth + 1):
        proj.append(levels[k].index_of(top.mats % (p ** k)))
    return levels, proj


@lru_cache(maxsize=None)
def _cyclic_tower(p: int, depth: int):
    levels = [CyclicGroup(p ** k) for k in range(0, depth + 1)]
    x = np.arange(p ** depth)
    proj = [np.mod(x, p ** k) for k in range(0, depth + 1)]
    return levels, proj


def profinite(name: str, depth: int = 3, beta: float = 0.5) -> ProfiniteModel:
    """Bundled congruence tower.

    Names: ``sl2z<p>`` for ``SL_2(Z_p)`` with ``N_k`` the level-``p^k``
    congruence kernel, and ``cyclic<p>`` for ``Z_p`` with ``N_k = p^k Z_p``.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    m = re.fullmatch(r"sl2z(\d+)", name)
    if m:
        levels, proj = _sl2_tower(int(m.group(1)), depth)
        return ProfiniteModel(name, levels, proj, beta)
    m = re.fullmatch(r"cyclic(\d+)", name)
    if m:
        levels, proj = _cyclic_tower(int(m.group(1)), depth)
        return ProfiniteModel(name, levels, proj, beta)
    raise KeyError(f"unknown profinite tower {name!r}")


class QuotientModel(_IndexModel):
    """``G/N_k`` of a profinite tower with the quotient metric.

    The quotient distance ``inf d(x n, y)`` over ``n`` in ``N_k`` is computed
    by exhausting all lifts at the working depth.
    """

    kind = "quotient"
    diameter = 1.0

    def __init__(self, parent: ProfiniteModel, level: int):
        self.parent = parent
        self.level = int(level)
        self.group = parent.levels[self.level]
        self.name = f"quotient({parent.name},{self.level})"
        if self.group.order == 1:
            self.diameter = 0.0

    @cached_property
    def _dist(self):
        # minimum of d(g, 1) over all lifts g of each coset
        d = np.full(self.group.order, np.inf)
        np.minimum.at(d, self.parent.proj[self.level], self.parent.dist_to_identity())
        return d

    def dist_to_identity(self):
        return self._dist

    def ball_volume(self, eta: float) -> float:
        _check_eta(eta)
        return float(np.count_nonzero(self._dist < eta)) / self.group.order


def quotient_model(model: ProfiniteModel, level: int) -> QuotientModel:
    """Finite quotient ``G/N_level`` of a profinite model.

    ``level = 0`` gives the trivial group.
    """
    if not isinstance(model, ProfiniteModel):
        raise TypeError("quotient_model needs a profinite tower")
    if not 0 <= level <= model.depth:
        raise ValueError(f"level {level} outside 0..{model.depth}")
    return QuotientModel(model, level)


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------

class ProductModel(GroupModel):
    """Direct product with the maximum metric and product Haar measure."""

    kind = "product"

    def __init__(self, factors: Sequence[GroupModel]):
        self.factors = tuple(factors)
        self.diameter = max(f.diameter for f in self.factors)
        self.conjugation_invariant_balls = all(
            f.conjugation_invariant_balls for f in self.factors
        )
        self.name = "product:(" + ",".join(f.spec() for f in self.factors) + ")"

    def identity(self):
        return tuple(f.identity() for f in self.factors)

    def multiply(self, g, h):
        return tuple(f.multiply(a, b) for f, a, b in zip(self.factors, g, h))

    def inverse(self, g):
        return tuple(f.inverse(a) for f, a in zip(self.factors, g))

    def distance(self, g, h):
        ds = [np.asarray(f.distance(a, b)) for f, a, b in zip(self.factors, g, h)]
        return np.maximum.reduce(ds)

    def ball_volume(self, eta: float) -> float:
        _check_eta(eta)
        return float(np.prod([f.ball_volume(eta) for f in self.factors]))

    def haar_sample(self, seed: int, n: int):
        if n < 1:
            raise ValueError("n must be at least 1")
        children = np.random.SeedSequence(seed).spawn(len(self.factors))
        return tuple(
            f.haar_sample(int(c.generate_state(1)[0]), n)
            for f, c in zip(self.factors, children)
        )

    def take(self, elements, idx):
        return tuple(f.take(e, idx) for f, e in zip(self.factors, elements))

    def subgroup_balls(self) -> bool:
        return all(f.subgroup_balls() for f in self.factors)


def product_model(models: Sequence[GroupModel]) -> ProductModel:
    """Product of at least two models."""
    models = list(models)
    if len(models) < 2:
        raise ValueError("product_model needs at least two factors")
    return ProductModel(models)


# ---------------------------------------------------------------------------
# functional front-ends
# ---------------------------------------------------------------------------

def su2() -> SU2Model:
    return SU2Model()


def torus() -> TorusModel:
    return TorusModel()


def ball_volume(model: GroupModel, eta: float) -> float:
    """Haar measure of the open ball ``1_eta``."""
    return model.ball_volume(eta)


def haar_sample(model: GroupModel, seed: int, n: int):
    """``n`` Haar-distributed elements, deterministic in ``(seed, n)``."""
    return model.haar_sample(seed, n)


class DimensionFit:
    """Result of fitting ``|1_eta| ~ eta**d0``.

    Attributes
    ----------
    d0_hat : float
        Least-squares slope of ``log |1_eta|`` against ``log eta``.
    C1_hat : float
        ``exp`` of the largest absolute residual, so that
        ``C1_hat**-1 eta**d0_hat <= |1_eta| <= C1_hat eta**d0_hat`` on the grid.
    table : list of tuple
        ``(eta, |1_eta|, log |1_eta| - d0_hat log eta)`` per scale.
    """

    def __init__(self, d0_hat, C1_hat, table):
        self.d0_hat = float(d0_hat)
        self.C1_hat = float(C1_hat)
        self.table = table

    def as_dict(self):
        return {
            "d0_hat": self.d0_hat,
            "C1_hat": self.C1_hat,
            "table": [
                {"eta": e, "volume": v, "log_ratio": r} for e, v, r in self.table
            ],
        }


def fit_dimension_condition(model: GroupModel, grid: Sequence[float]) -> DimensionFit:
    """Fit a dimension condition on a grid of scales.

    The exponent is the least-squares slope of ``log |1_eta|`` against
    ``log eta`` (with a free intercept).  The constant is then chosen as the
    smallest ``C1`` for which the two-sided bound with that exponent holds on
    every grid point, i.e. the intercept is folded into ``C1``.

    Parameters
    ----------
    model : GroupModel
    grid : sequence of float
        At least four scales in ``(0, 1)``.
    """
    eta = np.asarray(list(grid), dtype=float)
    if eta.size < 4:
        raise ValueError("need at least 4 scales")
    if np.any(eta <= 0) or np.any(eta >= 1):
        raise ValueError("scales must lie in (0, 1)")
    vol = np.array([model.ball_volume(e) for e in eta])
    if np.any(vol <= 0):
        raise RuntimeError("zero ball volume")
    x = np.log(eta)
    y = np.log(vol)
    d0 = float(np.polyfit(x, y, 1)[0])
    resid = y - d0 * x
    C1 = float(np.exp(np.max(np.abs(resid))))
    table = [(float(e), float(v), float(r)) for e, v, r in zip(eta, vol, resid)]
    return DimensionFit(d0, C1, table)


def _fit_points(eta, vol) -> DimensionFit:
    x = np.log(eta)
    y = np.log(vol)
    d0 = float(np.polyfit(x, y, 1)[0]) if np.ptp(x) > 0 else 0.0
    resid = y - d0 * x
    C1 = float(np.exp(np.max(np.abs(resid))))
    table = [(float(e), float(v), float(r)) for e, v, r in zip(eta, vol, resid)]
    return DimensionFit(d0, C1, table)


def reference_fit(model: GroupModel) -> DimensionFit:
    """Dimension condition used for the comparability constant of a model.

    Continuous models are fitted on 32 log-spaced scales in ``[1e-3, 0.5]``.
    Towers and finite groups are fitted on the scales ``beta**k``,
    ``k = 0 .. depth``, where the balls are exactly the subgroups ``N_k``;
    for a finite group (one level) this gives ``d0 = log|G| / log(1/beta)``
    and ``C1 = 1``.
    """
    if isinstance(model, (ProfiniteModel, FiniteModel)):
        depth = getattr(model, "depth", 1)
        eta = model.beta ** np.arange(depth + 1, dtype=float)
        vol = np.array([model.ball_volume(e) for e in eta])
        return _fit_points(eta, vol)
    if isinstance(model, QuotientModel):
        return reference_fit(profinite_truncation(model.parent, model.level))
    if isinstance(model, ProductModel) and all(
        isinstance(f, (ProfiniteModel, FiniteModel)) for f in model.factors
    ):
        depth = max(getattr(f, "depth", 1) for f in model.factors)
        beta = max(f.beta for f in model.factors)
        eta = beta ** np.arange(depth + 1, dtype=float)
        return _fit_points(eta, np.array([model.ball_volume(e) for e in eta]))
    grid = np.geomspace(1e-3, 0.5, 32)
    return fit_dimension_condition(model, grid)


def omega(model: GroupModel, fit: Optional[DimensionFit] = None) -> float:
    """Comparability constant ``Omega = 2**d0 * C1**2``."""
    fit = reference_fit(model) if fit is None else fit
    return float(2.0 ** max(fit.d0_hat, 0.0) * fit.C1_hat ** 2)


def profinite_truncation(model: "ProfiniteModel", level: int) -> "ProfiniteModel":
    """The tower cut at ``level`` (same catalog and ``beta``)."""
    return profinite(model.catalog, depth=max(level, 1), beta=model.beta)


# ---------------------------------------------------------------------------
# model specification strings
# ---------------------------------------------------------------------------

def _split_top(s: str) -> list:
    parts, depth, cur = [], 0, []
    for ch in s:
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur.append(ch)
    parts.append("".join(cur))
    return parts


def parse_model(spec: str) -> GroupModel:
    """Build a model from a specification string.

    Accepted forms: ``su2``, ``torus``, ``finite:<name>``,
    ``profinite:<name>:depth=<n>:beta=<q>`` and ``product:(<spec>,<spec>)``.
    """
    spec = spec.strip()
    if spec == "su2":
        return su2()
    if spec == "torus":
        return torus()
    if spec.startswith("finite:"):
        return finite(spec.split(":", 1)[1])
    if spec.startswith("profinite:"):
        fields = spec.split(":")
        name = fields[1]
        opts = dict(f.split("=", 1) for f in fields[2:])
        return profinite(name, depth=int(opts.get("depth", 3)), beta=float(opts.get("beta", 0.5)))
    if spec.startswith("product:"):
        inner = spec[len("product:"):].strip()
        if not (inner.startswith("(") and inner.endswith(")")):
            raise ValueError(f"bad product spec {spec!r}")
        return product_model([parse_model(p) for p in _split_top(inner[1:-1])])
    raise ValueError(f"unrecognized model spec {spec!r}")
