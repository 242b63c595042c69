"""Proximal operators and problem builders.

Provides the scalar proxes used by the solvers (soft-threshold, singular-value
thresholding, nonnegative projection), graph-Laplacian construction, the
five-block low-rank-representation instance, and seeded synthetic QPs with a
dense KKT reference solution.
"""

from __future__ import annotations

import json
import pathlib
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .linops import BlockLayout, BlockPoint, LinearMap, read_matrix, write_matrix
from .padmm_ebb import MultiBlockProblem


# ---------------------------------------------------------------------------
# Elementary proximal operators
# ---------------------------------------------------------------------------


def prox_l1(t: float, lam: float, v: np.ndarray) -> np.ndarray:
    """Soft threshold with threshold t * lam."""
    if t <= 0 or lam < 0:
        raise ValueError("need t > 0 and lam >= 0")
    v = np.asarray(v, dtype=float)
    thr = t * lam
    return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)


def prox_nuclear(t: float, V: np.ndarray) -> np.ndarray:
    """Singular-value soft thresholding via a full SVD."""
    if t <= 0:
        raise ValueError("need t > 0")
    V = np.asarray(V, dtype=float)
    u, s, vt = np.linalg.svd(V, full_matrices=False)
    return (u * np.maximum(s - t, 0.0)) @ vt


def proj_nonneg(v: np.ndarray) -> np.ndarray:
    """Componentwise projection onto the nonnegative orthant."""
    return np.maximum(np.asarray(v, dtype=float), 0.0)


# ---------------------------------------------------------------------------
# ProxFn wrapper
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProxFn:
    """A convex function given through its prox map and its value.

    ``evaluate(t, v)`` returns argmin_u g(u) + ||u - v||^2 / (2t); ``value``
    may return ``inf``.  Matrix-valued functions reshape flat inputs
    column-major using ``shape`` and flatten the result back.
    """

    evaluate_fn: Callable[[float, np.ndarray], np.ndarray]
    value_fn: Callable[[np.ndarray], float]
    name: str = ""
    shape: Optional[Tuple[int, int]] = None

    def _as_arg(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.shape is not None and v.ndim == 1:
            return v.reshape(self.shape, order="F")
        return v

    def evaluate(self, t: float, v: np.ndarray) -> np.ndarray:
        if t <= 0:
            raise ValueError("prox step must be positive")
        vin = np.asarray(v, dtype=float)
        out = np.asarray(self.evaluate_fn(t, self._as_arg(vin)), dtype=float)
        if vin.ndim == 1 and out.ndim > 1:
            out = out.ravel(order="F")
        return out

    def value(self, v: np.ndarray) -> float:
        return float(self.value_fn(self._as_arg(np.asarray(v, dtype=float))))

    # -- constructors -------------------------------------------------------

    @staticmethod
    def l1(lam: float) -> "ProxFn":
        return ProxFn(lambda t, v: prox_l1(t, lam, v),
                      lambda v: lam * float(np.abs(v).sum()),
                      name="l1(%g)" % lam)

    @staticmethod
    def nuclear(shape: Tuple[int, int]) -> "ProxFn":
        return ProxFn(lambda t, V: prox_nuclear(t, V),
                      lambda V: float(np.linalg.svd(V, compute_uv=False).sum()),
                      name="nuclear", shape=tuple(shape))

    @staticmethod
    def nonneg() -> "ProxFn":
        def value(v):
            return 0.0 if v.min(initial=0.0) >= -1e-12 else float("inf")
        return ProxFn(lambda t, v: proj_nonneg(v), value, name="nonneg")

    @staticmethod
    def zero() -> "ProxFn":
        return ProxFn(lambda t, v: np.array(v, dtype=float, copy=True),
                      lambda v: 0.0, name="zero")

    @staticmethod
    def constant(target: np.ndarray) -> "ProxFn":
        """Indicator of the single point ``target``."""
        tgt = np.asarray(target, dtype=float).ravel(order="F")

        def value(v):
            dv = np.asarray(v, dtype=float).ravel(order="F") - tgt
            return 0.0 if np.linalg.norm(dv) <= 1e-9 * (1.0 + np.linalg.norm(tgt)) \
                else float("inf")

        return ProxFn(lambda t, v: tgt.copy() if np.asarray(v).ndim == 1
                      else tgt.reshape(np.asarray(v).shape, order="F"),
                      value, name="constant")


# ---------------------------------------------------------------------------
# Graph Laplacians
# ---------------------------------------------------------------------------


def knn_heat_affinity(samples: np.ndarray, k: int = 5) -> np.ndarray:
    """Symmetric k-nearest-neighbor heat-kernel affinity of the sample rows.

    Bandwidth is the median pairwise distance; the affinity is symmetrized by
    the elementwise maximum and has zero diagonal.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    sq = np.sum(samples * samples, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * samples @ samples.T, 0.0)
    dists = np.sqrt(d2)
    off = dists[~np.eye(n, dtype=bool)]
    h = float(np.median(off)) if off.size else 1.0
    if h <= 0:
        h = 1.0
    W = np.zeros((n, n))
    kk = min(k, n - 1)
    for i in range(n):
        order = np.argsort(dists[i])
        neigh = [j for j in order if j != i][:kk]
        W[i, neigh] = np.exp(-d2[i, neigh] / (2.0 * h * h))
    W = np.maximum(W, W.T)
    np.fill_diagonal(W, 0.0)
    return W


def build_graph_laplacian(W: np.ndarray) -> np.ndarray:
    """Unnormalized graph Laplacian L = D - W of a symmetric affinity."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError("affinity must be square")
    if not np.allclose(W, W.T, atol=1e-10):
        raise ValueError("affinity must be symmetric")
    if W.min(initial=0.0) < -1e-12:
        raise ValueError("affinity weights must be nonnegative")
    return np.diag(W.sum(axis=1)) - W


# ---------------------------------------------------------------------------
# LRR instance (five blocks: Z, G, E, H, F)
# ---------------------------------------------------------------------------


@dataclass
class LrrInstance:
    """Low-rank-representation program with slack blocks.

        min ||H||_* + ||F||_* + lam ||E||_1
            + (mu/2) tr(Z L_Z Z^T) + (gamma/2) tr(G L_G G^T)
        s.t. X = XZ + GX + E,  Z = H,  G = F,  Z >= 0,  G >= 0.
    """

    X: np.ndarray
    L_Z: np.ndarray
    L_G: np.ndarray
    lam: float
    mu: float
    gamma: float
    orientation: str
    problem: MultiBlockProblem = field(repr=False, default=None)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.X.shape


def _vec(M: np.ndarray) -> np.ndarray:
    return np.asarray(M, dtype=float).ravel(order="F")


def _check_laplacian_psd(L: np.ndarray, name: str) -> np.ndarray:
    L = np.asarray(L, dtype=float)
    if not np.allclose(L, L.T, atol=1e-9):
        raise ValueError("%s must be symmetric" % name)
    w = scipy.linalg.eigvalsh(L)
    if w[0] < -1e-8 * max(1.0, abs(w[-1])):
        raise ValueError("%s must be PSD (min eigenvalue %.3e)" % (name, w[0]))
    return L


def build_lrr(X: np.ndarray, L_Z: Optional[np.ndarray] = None,
              L_G: Optional[np.ndarray] = None, lam: float = 1e3,
              mu: float = 1e4, gamma: float = 1e4,
              orientation: str = "rows") -> LrrInstance:
    """Assemble the five-block LRR problem for the multi-block solver.

    If the Laplacians are omitted they are built from k-NN heat-kernel
    affinities: L_Z over the columns of X, L_G over its rows.  ``orientation``
    selects the quadratic coupling: "rows" means tr(Z L Z^T) (grad mu*Z*L),
    "cols" means tr(Z^T L Z) (grad mu*L*Z).
    """
    X = np.asarray(X, dtype=float)
    d, n = X.shape
    if orientation not in ("rows", "cols"):
        raise ValueError("orientation must be 'rows' or 'cols'")
    if L_Z is None:
        L_Z = build_graph_laplacian(knn_heat_affinity(X.T))
    if L_G is None:
        L_G = build_graph_laplacian(knn_heat_affinity(X))
    L_Z = _check_laplacian_psd(L_Z, "L_Z")
    L_G = _check_laplacian_psd(L_G, "L_G")
    if L_Z.shape != (n, n) or L_G.shape != (d, d):
        raise ValueError("Laplacian shapes must match X")

    layout = BlockLayout((n * n, d * d, d * n, n * n, d * d),
                         shapes=((n, n), (d, d), (d, n), (n, n), (d, d)))
    m1, m2, m3 = d * n, n * n, d * d
    mdim = m1 + m2 + m3

    def split_dual(y):
        return (y[:m1].reshape(d, n, order="F"),
                y[m1:m1 + m2].reshape(n, n, order="F"),
                y[m1 + m2:].reshape(d, d, order="F"))

    def join_dual(Y1, Y2, Y3):
        return np.concatenate([_vec(Y1), _vec(Y2), _vec(Y3)])

    def lm(apply_fn, adjoint_fn, nblk):
        return LinearMap(apply=apply_fn, adjoint_apply=adjoint_fn,
                         domain_dim=mdim, codomain_dim=nblk)

    A_Z = lm(lambda y: _vec(X.T @ split_dual(y)[0] + split_dual(y)[1]),
             lambda z: join_dual(X @ z.reshape(n, n, order="F"),
                                 z.reshape(n, n, order="F"), np.zeros((d, d))),
             n * n)
    A_G = lm(lambda y: _vec(split_dual(y)[0] @ X.T + split_dual(y)[2]),
             lambda g: join_dual(g.reshape(d, d, order="F") @ X,
                                 np.zeros((n, n)), g.reshape(d, d, order="F")),
             d * d)
    A_E = lm(lambda y: _vec(split_dual(y)[0]),
             lambda e: join_dual(e.reshape(d, n, order="F"),
                                 np.zeros((n, n)), np.zeros((d, d))),
             d * n)
    A_H = lm(lambda y: -_vec(split_dual(y)[1]),
             lambda h: join_dual(np.zeros((d, n)),
                                 -h.reshape(n, n, order="F"), np.zeros((d, d))),
             n * n)
    A_F = lm(lambda y: -_vec(split_dual(y)[2]),
             lambda f: join_dual(np.zeros((d, n)), np.zeros((n, n)),
                                 -f.reshape(d, d, order="F")),
             d * d)

    b = join_dual(X, np.zeros((n, n)), np.zeros((d, d)))

    def grad_f(xs):
        Z = xs[0].reshape(n, n, order="F")
        G = xs[1].reshape(d, d, order="F")
        if orientation == "rows":
            gz, gg = mu * (Z @ L_Z), gamma * (G @ L_G)
        else:
            gz, gg = mu * (L_Z @ Z), gamma * (L_G @ G)
        return [_vec(gz), _vec(gg), np.zeros(d * n),
                np.zeros(n * n), np.zeros(d * d)]

    def f_value(xs):
        Z = xs[0].reshape(n, n, order="F")
        G = xs[1].reshape(d, d, order="F")
        if orientation == "rows":
            return 0.5 * mu * float(np.trace(Z @ L_Z @ Z.T)) \
                + 0.5 * gamma * float(np.trace(G @ L_G @ G.T))
        return 0.5 * mu * float(np.trace(Z.T @ L_Z @ Z)) \
            + 0.5 * gamma * float(np.trace(G.T @ L_G @ G))

    lz_norm = float(scipy.linalg.eigvalsh(L_Z)[-1])
    lg_norm = float(scipy.linalg.eigvalsh(L_G)[-1])
    problem = MultiBlockProblem(
        gs=[ProxFn.nonneg(), ProxFn.nonneg(), ProxFn.l1(lam),
            ProxFn.nuclear((n, n)), ProxFn.nuclear((d, d))],
        grad_f=grad_f, L=[mu * lz_norm, gamma * lg_norm, 0.0, 0.0, 0.0],
        A=[A_Z, A_G, A_E, A_H, A_F], b=b, primal_layout=layout,
        f_value=f_value, name="lrr(%dx%d)" % (d, n))
    return LrrInstance(X=X, L_Z=L_Z, L_G=L_G, lam=lam, mu=mu, gamma=gamma,
                       orientation=orientation, problem=problem)


def save_lrr_instance(inst: LrrInstance, directory: Union[str, pathlib.Path]) -> None:
    """Serialize an LRR instance to a JSON manifest plus MatrixMarket files."""
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, mat in (("X", inst.X), ("L_Z", inst.L_Z), ("L_G", inst.L_G)):
        write_matrix(directory / (name + ".mtx"), mat)
    manifest = {"kind": "lrr", "lam": inst.lam, "mu": inst.mu,
                "gamma": inst.gamma, "orientation": inst.orientation,
                "matrices": {"X": "X.mtx", "L_Z": "L_Z.mtx", "L_G": "L_G.mtx"}}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_lrr_instance(directory: Union[str, pathlib.Path]) -> LrrInstance:
    directory = pathlib.Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("kind") != "lrr":
        raise ValueError("manifest does not describe an LRR instance")
    mats = {k: read_matrix(directory / v)
            for k, v in manifest["matrices"].items()}
    return build_lrr(mats["X"], mats["L_Z"], mats["L_G"], lam=manifest["lam"],
                     mu=manifest["mu"], gamma=manifest["gamma"],
                     orientation=manifest["orientation"])


# ---------------------------------------------------------------------------
# Synthetic QP instances
# ---------------------------------------------------------------------------


@dataclass
class QpInstance:
    """Block-separable strongly convex QP with linear equality coupling.

        min sum_i (1/2) x_i^T Q_i x_i + c_i^T x_i   s.t.  sum_i G_i x_i = b

    with the reference (x*, y*) from a dense KKT solve stored at build time.
    """

    seed: int
    Q: List[np.ndarray]
    c: List[np.ndarray]
    G: List[np.ndarray]
    b: np.ndarray
    x_star: List[np.ndarray]
    y_star: np.ndarray
    problem: MultiBlockProblem = field(repr=False, default=None)

    @property
    def p(self) -> int:
        return len(self.Q)

    @property
    def Q_full(self) -> np.ndarray:
        return scipy.linalg.block_diag(*self.Q)

    @property
    def c_full(self) -> np.ndarray:
        return np.concatenate(self.c)

    @property
    def G_full(self) -> np.ndarray:
        return np.hstack(self.G)

    @property
    def z_star(self) -> BlockPoint:
        return self.problem.join(self.x_star, self.y_star)

    def kkt_operator(self) -> Tuple[np.ndarray, np.ndarray]:
        """Dense (K, q) with KKT map T(z) = K z - q (rows: stationarity; b - Gx)."""
        Qf, Gf = self.Q_full, self.G_full
        m = self.b.size
        K = np.block([[Qf, Gf.T], [-Gf, np.zeros((m, m))]])
        q = np.concatenate([-self.c_full, -self.b])
        return K, q

    @property
    def kappa(self) -> float:
        """Inverse of the smallest singular value of the KKT map."""
        K, _ = self.kkt_operator()
        return 1.0 / float(np.linalg.svd(K, compute_uv=False)[-1])

    def kkt_residual(self, x: np.ndarray, y: np.ndarray) -> float:
        x = np.asarray(x, dtype=float).ravel()
        stat = self.Q_full @ x + self.c_full + self.G_full.T @ y
        feas = self.G_full @ x - self.b
        return float(np.linalg.norm(np.concatenate([stat, feas])))


def gen_qp(seed: int, p: int = 2, n_i: Union[int, Sequence[int]] = 5,
           m: int = 3) -> QpInstance:
    """Seeded random QP; regenerates until the constraints are full row rank."""
    sizes = [n_i] * p if isinstance(n_i, int) else [int(s) for s in n_i]
    if len(sizes) != p:
        raise ValueError("n_i must be an int or a length-p sequence")
    if m > sum(sizes):
        raise ValueError("need m <= total primal dimension")
    for attempt in range(50):
        rng = np.random.default_rng(seed + 1_000_003 * attempt)
        Qs, cs, Gs = [], [], []
        for n in sizes:
            B = rng.standard_normal((n, n))
            Qs.append(B @ B.T / n + 0.5 * np.eye(n))
            cs.append(rng.standard_normal(n))
            Gs.append(rng.standard_normal((m, n)))
        b = rng.standard_normal(m)
        Gf = np.hstack(Gs)
        if m and np.linalg.svd(Gf, compute_uv=False)[-1] < 1e-6:
            continue
        Qf = scipy.linalg.block_diag(*Qs)
        kkt = np.block([[Qf, Gf.T], [Gf, np.zeros((m, m))]])
        sol = np.linalg.solve(kkt, np.concatenate([-np.concatenate(cs), b]))
        x_full, y_star = sol[:sum(sizes)], sol[sum(sizes):]
        offs = np.cumsum([0] + sizes)
        x_star = [x_full[offs[i]:offs[i + 1]].copy() for i in range(p)]

        layout = BlockLayout(tuple(sizes))
        A = [LinearMap(apply=(lambda Gi: lambda y: Gi.T @ y)(Gi),
                       adjoint_apply=(lambda Gi: lambda x: Gi @ x)(Gi),
                       domain_dim=m, codomain_dim=n)
             for Gi, n in zip(Gs, sizes)]
        Ls = [float(scipy.linalg.eigvalsh(Qi)[-1]) for Qi in Qs]

        def grad_f(xs, Qs=Qs, cs=cs):
            return [Qi @ x + ci for Qi, ci, x in zip(Qs, cs, xs)]

        def f_value(xs, Qs=Qs, cs=cs):
            return sum(0.5 * float(x @ Qi @ x) + float(ci @ x)
                       for Qi, ci, x in zip(Qs, cs, xs))

        problem = MultiBlockProblem(
            gs=[ProxFn.zero() for _ in sizes], grad_f=grad_f, L=Ls,
            A=A, b=b, primal_layout=layout, f_value=f_value,
            name="qp(seed=%d,p=%d,m=%d)" % (seed, p, m))
        inst = QpInstance(seed=seed, Q=Qs, c=cs, G=Gs, b=b,
                          x_star=x_star, y_star=y_star, problem=problem)
        if inst.kkt_residual(np.concatenate(x_star), y_star) <= 1e-10:
            return inst
    raise RuntimeError("could not generate a well-posed QP instance")
