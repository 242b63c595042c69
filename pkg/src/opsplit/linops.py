"""Block vectors, linear maps, SPD metrics, and spectral estimation.

Everything downstream (solver kernels, step oracles, problem builders) is written
against the small vocabulary defined here: a :class:`BlockPoint` living in a
product space, a :class:`LinearMap` with an explicit adjoint, and a
:class:`Metric` (self-adjoint positive definite operator) with ``apply``/``solve``
access and spectral bounds.  All storage is dense; problem sizes are desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.io
import scipy.linalg


# ---------------------------------------------------------------------------
# Block layout and block points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockLayout:
    """Sizes of the blocks of a product space, with optional matrix shapes.

    ``shapes[i]`` is either None (plain vector block) or a ``(rows, cols)``
    pair; matrix-shaped blocks are stored flattened in column-major order.
    """

    sizes: tuple
    shapes: tuple = None

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if self.shapes is None:
            object.__setattr__(self, "shapes", (None,) * len(sizes))
        else:
            shapes = tuple(self.shapes)
            if len(shapes) != len(sizes):
                raise ValueError("shapes/sizes length mismatch")
            for sh, n in zip(shapes, sizes):
                if sh is not None and sh[0] * sh[1] != n:
                    raise ValueError("shape %r inconsistent with size %d" % (sh, n))
            object.__setattr__(self, "shapes", shapes)

    @property
    def nblocks(self) -> int:
        return len(self.sizes)

    @property
    def dim(self) -> int:
        return sum(self.sizes)

    @property
    def offsets(self):
        out = [0]
        for s in self.sizes:
            out.append(out[-1] + s)
        return tuple(out)

    def block_slice(self, i: int) -> slice:
        off = self.offsets
        return slice(off[i], off[i + 1])


class BlockPoint:
    """An element of a product space, stored as one flat float64 array."""

    __slots__ = ("data", "layout")

    def __init__(self, data: np.ndarray, layout: BlockLayout):
        data = np.asarray(data, dtype=float)
        if data.shape != (layout.dim,):
            raise ValueError("data length %d does not match layout dim %d"
                             % (data.size, layout.dim))
        self.data = data
        self.layout = layout

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_blocks(cls, blocks: Sequence[np.ndarray], shapes=None) -> "BlockPoint":
        flats = []
        sizes = []
        inferred_shapes = []
        for b in blocks:
            b = np.asarray(b, dtype=float)
            if b.ndim == 2:
                inferred_shapes.append(b.shape)
                flats.append(b.ravel(order="F"))
            else:
                inferred_shapes.append(None)
                flats.append(b.ravel())
            sizes.append(flats[-1].size)
        if shapes is None:
            shapes = tuple(inferred_shapes)
        layout = BlockLayout(tuple(sizes), shapes)
        return cls(np.concatenate(flats) if flats else np.zeros(0), layout)

    @classmethod
    def zeros(cls, layout: BlockLayout) -> "BlockPoint":
        return cls(np.zeros(layout.dim), layout)

    # -- block access -------------------------------------------------------

    def block(self, i: int) -> np.ndarray:
        """Flat view of block i (writing into it mutates the point)."""
        return self.data[self.layout.block_slice(i)]

    def block_mat(self, i: int) -> np.ndarray:
        """Block i reshaped to its recorded (rows, cols) shape."""
        sh = self.layout.shapes[i]
        if sh is None:
            raise ValueError("block %d has no matrix shape" % i)
        return self.block(i).reshape(sh, order="F")

    def set_block(self, i: int, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=float)
        if value.ndim == 2:
            value = value.ravel(order="F")
        self.data[self.layout.block_slice(i)] = value

    def blocks(self):
        return [self.block(i) for i in range(self.layout.nblocks)]

    # -- arithmetic ---------------------------------------------------------

    def _check(self, other: "BlockPoint") -> None:
        if self.layout.sizes != other.layout.sizes:
            raise ValueError("layout mismatch")

    def __add__(self, other):
        self._check(other)
        return BlockPoint(self.data + other.data, self.layout)

    def __sub__(self, other):
        self._check(other)
        return BlockPoint(self.data - other.data, self.layout)

    def __mul__(self, a: float):
        return BlockPoint(self.data * float(a), self.layout)

    __rmul__ = __mul__

    def __neg__(self):
        return BlockPoint(-self.data, self.layout)

    def inner(self, other: "BlockPoint") -> float:
        self._check(other)
        return float(np.dot(self.data, other.data))

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def copy(self) -> "BlockPoint":
        return BlockPoint(self.data.copy(), self.layout)

    def __repr__(self):
        return "BlockPoint(sizes=%r)" % (self.layout.sizes,)


def as_flat(v) -> np.ndarray:
    """Flat float64 array behind a BlockPoint or array-like."""
    if isinstance(v, BlockPoint):
        return v.data
    return np.asarray(v, dtype=float)


# ---------------------------------------------------------------------------
# Linear maps
# ---------------------------------------------------------------------------


@dataclass
class LinearMap:
    """A linear operator given by matching forward/adjoint callables.

    ``apply`` maps a flat array of length ``domain_dim`` to one of length
    ``codomain_dim``; ``adjoint_apply`` goes the other way and must satisfy
    <A v, u> = <v, A* u>.
    """

    apply: Callable[[np.ndarray], np.ndarray]
    adjoint_apply: Callable[[np.ndarray], np.ndarray]
    domain_dim: int
    codomain_dim: int

    @classmethod
    def from_dense(cls, matrix: np.ndarray) -> "LinearMap":
        matrix = np.asarray(matrix, dtype=float)
        m, n = matrix.shape
        return cls(apply=lambda v: matrix @ v,
                   adjoint_apply=lambda u: matrix.T @ u,
                   domain_dim=n, codomain_dim=m)

    @classmethod
    def zero(cls, domain_dim: int, codomain_dim: int) -> "LinearMap":
        return cls(apply=lambda v: np.zeros(codomain_dim),
                   adjoint_apply=lambda u: np.zeros(domain_dim),
                   domain_dim=domain_dim, codomain_dim=codomain_dim)

    def to_dense(self) -> np.ndarray:
        cols = [self.apply(e) for e in np.eye(self.domain_dim)]
        if not cols:
            return np.zeros((self.codomain_dim, 0))
        return np.column_stack(cols)


@dataclass
class AdjointReport:
    max_residual: float
    ok: bool
    probes: int


def adjoint_check(A: LinearMap, probes: int = 20, seed: int = 0,
                  tol: float = 1e-8) -> AdjointReport:
    """Randomized check of the adjoint identity <Av,u> = <v,A*u>."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(probes):
        v = rng.standard_normal(A.domain_dim)
        u = rng.standard_normal(A.codomain_dim)
        Av = A.apply(v)
        Atu = A.adjoint_apply(u)
        num = abs(float(np.dot(Av, u)) - float(np.dot(v, Atu)))
        den = 1.0 + float(np.linalg.norm(Av)) * float(np.linalg.norm(u))
        worst = max(worst, num / den)
    return AdjointReport(max_residual=worst, ok=worst <= tol, probes=probes)


def spectral_upper_bound(A: LinearMap, iters: int = 100, seed: int = 0,
                         inflation: float = 1.05) -> float:
    """Safe upper estimate of the largest singular value of A.

    Power iteration on A*A from a seeded start vector, inflated by the given
    safety factor (5% by default).  Returns 0 for the zero map.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.domain_dim)
    nv = np.linalg.norm(v)
    if nv == 0.0 or A.domain_dim == 0:
        return 0.0
    v /= nv
    lam = 0.0
    for _ in range(iters):
        w = A.adjoint_apply(A.apply(v))
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        lam = float(np.dot(v, w))
        v = w / nw
    # lam is a Rayleigh quotient for A*A; nw >= lam is also an estimate of the
    # top eigenvalue and is never below the Rayleigh quotient.
    lam = max(lam, nw)
    return float(np.sqrt(lam)) * inflation


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


class Metric:
    """Self-adjoint positive definite operator with apply/solve access.

    Subclasses must set ``omega_lower``/``omega_upper`` such that
    omega_lower * I <= M <= omega_upper * I.
    """

    omega_lower: float
    omega_upper: float

    def apply(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def solve(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class IdentityMetric(Metric):
    def __init__(self):
        self.omega_lower = 1.0
        self.omega_upper = 1.0

    def apply(self, v):
        return np.asarray(v, dtype=float)

    def solve(self, v):
        return np.asarray(v, dtype=float)


class ScaledIdentityMetric(Metric):
    def __init__(self, scale: float):
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.scale = float(scale)
        self.omega_lower = self.scale
        self.omega_upper = self.scale

    def apply(self, v):
        return self.scale * np.asarray(v, dtype=float)

    def solve(self, v):
        return np.asarray(v, dtype=float) / self.scale


class BlockDiagonalMetric(Metric):
    """Metric that is d_i times the identity on block i.

    ``scalars`` are the metric scalars d_i themselves; use
    :meth:`from_inverse_scalars` when the quantities at hand parameterize
    the inverse metric.
    """

    def __init__(self, scalars: Sequence[float], layout: BlockLayout):
        scalars = [float(s) for s in scalars]
        if len(scalars) != layout.nblocks:
            raise ValueError("one scalar per block required")
        if min(scalars) <= 0:
            raise ValueError("metric scalars must be positive")
        self.scalars = tuple(scalars)
        self.layout = layout
        self._weights = np.repeat(np.asarray(scalars), layout.sizes)
        self.omega_lower = min(scalars)
        self.omega_upper = max(scalars)

    @classmethod
    def from_inverse_scalars(cls, inv_scalars: Sequence[float],
                             layout: BlockLayout) -> "BlockDiagonalMetric":
        return cls([1.0 / float(s) for s in inv_scalars], layout)

    def apply(self, v):
        return np.asarray(v, dtype=float) * self._weights

    def solve(self, v):
        return np.asarray(v, dtype=float) / self._weights


class DenseMetric(Metric):
    """Metric backed by an explicit SPD matrix (desk-scale only)."""

    def __init__(self, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("square matrix required")
        if np.max(np.abs(matrix - matrix.T)) > 1e-10 * (1 + np.max(np.abs(matrix))):
            raise ValueError("matrix is not symmetric")
        self.matrix = 0.5 * (matrix + matrix.T)
        eigs = scipy.linalg.eigvalsh(self.matrix)
        if eigs[0] <= 0:
            raise ValueError("matrix is not positive definite")
        self.omega_lower = float(eigs[0])
        self.omega_upper = float(eigs[-1])
        self._chol = scipy.linalg.cho_factor(self.matrix)

    def apply(self, v):
        return self.matrix @ np.asarray(v, dtype=float)

    def solve(self, v):
        return scipy.linalg.cho_solve(self._chol, np.asarray(v, dtype=float))


class CallableMetric(Metric):
    """Metric given by apply/solve callables plus spectral bounds.

    Used for structured saddle-point metrics whose apply and solve are cheap
    but whose dense form is never assembled.
    """

    def __init__(self, apply_fn, solve_fn, omega_lower: float, omega_upper: float):
        self._apply = apply_fn
        self._solve = solve_fn
        self.omega_lower = float(omega_lower)
        self.omega_upper = float(omega_upper)

    def apply(self, v):
        return self._apply(np.asarray(v, dtype=float))

    def solve(self, v):
        return self._solve(np.asarray(v, dtype=float))


def weighted_norm_sq(M: Metric, v) -> float:
    """<v, M v> for a BlockPoint or flat array."""
    x = as_flat(v)
    return float(np.dot(x, M.apply(x)))


def weighted_norm(M: Metric, v) -> float:
    return float(np.sqrt(max(weighted_norm_sq(M, v), 0.0)))


# ---------------------------------------------------------------------------
# MatrixMarket IO
# ---------------------------------------------------------------------------


def read_matrix(path) -> np.ndarray:
    """Read a MatrixMarket file as a dense ndarray."""
    m = scipy.io.mmread(str(path))
    if hasattr(m, "toarray"):
        m = m.toarray()
    return np.asarray(m, dtype=float)


def write_matrix(path, matrix: np.ndarray) -> None:
    """Write a dense matrix to a MatrixMarket file."""
    scipy.io.mmwrite(str(path), np.atleast_2d(np.asarray(matrix, dtype=float)))
