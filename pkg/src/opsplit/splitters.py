"""Step oracles for classical splitting schemes, certified for the kernel.

Each oracle performs one iteration of a known splitting method (forward-
backward-half-forward, projective proximal-gradient consensus splitting,
Condat-Vu primal-dual, and an adaptive-step primal-dual variant) and returns
an :class:`~opsplit.hpe_core.HpeCertificate` together with the natively
computed next iterate.  The certificate always satisfies the relative-error
criterion under the method's own metric, and the native update coincides with
the kernel's extra-gradient correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .hpe_core import HpeCertificate, extragradient_step
from .linops import (BlockLayout, BlockPoint, CallableMetric, IdentityMetric,
                     LinearMap, Metric)
from .prox_problems import ProxFn


def _zero_fn(u: np.ndarray) -> np.ndarray:
    return np.zeros_like(u)


# ---------------------------------------------------------------------------
# Forward-backward-half-forward
# ---------------------------------------------------------------------------


@dataclass
class FbhfProblem:
    """Monotone inclusion 0 in (A + B1 + B2)(x).

    ``resolvent(gamma, u)`` evaluates J_{gamma A}(u); B1 is beta-cocoercive
    (beta = None means B1 = 0); B2 is monotone and L-Lipschitz.
    """

    dim: int
    resolvent: Callable[[float, np.ndarray], np.ndarray]
    B1: Optional[Callable[[np.ndarray], np.ndarray]] = None
    beta: Optional[float] = None
    B2: Optional[Callable[[np.ndarray], np.ndarray]] = None
    L: float = 0.0

    def __post_init__(self):
        if self.B1 is not None and (self.beta is None or self.beta <= 0):
            raise ValueError("B1 requires a positive cocoercivity constant beta")
        if self.L < 0:
            raise ValueError("L must be nonnegative")

    @property
    def layout(self) -> BlockLayout:
        return BlockLayout((self.dim,))


def fbhf_max_theta(p: FbhfProblem, gamma: float, sigma: float) -> float:
    """Largest over-relaxation admissible at step size gamma."""
    coco = gamma / (2.0 * p.beta) if p.B1 is not None else 0.0
    return (sigma - gamma ** 2 * p.L ** 2 - coco) / (1.0 + gamma ** 2 * p.L ** 2)


def fbhf_step(x: BlockPoint, p: FbhfProblem, gamma: float, theta: float,
              sigma: Optional[float] = None) -> Tuple[HpeCertificate, BlockPoint]:
    """One certified forward-backward-half-forward step (metric I, c = gamma)."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if sigma is not None and theta > fbhf_max_theta(p, gamma, sigma) + 1e-12:
        raise ValueError("theta exceeds the admissible step bound")
    xf = x.data
    b1 = p.B1(xf) if p.B1 is not None else np.zeros_like(xf)
    b2x = p.B2(xf) if p.B2 is not None else np.zeros_like(xf)
    y = np.asarray(p.resolvent(gamma, xf - gamma * (b1 + b2x)), dtype=float)
    b2y = p.B2(y) if p.B2 is not None else np.zeros_like(xf)
    v = (xf - y) / gamma - b2x + b2y
    eps = 0.0 if p.B1 is None else float(np.dot(xf - y, xf - y)) / (4.0 * p.beta)
    cert = HpeCertificate(y=BlockPoint(y, x.layout), v=BlockPoint(v, x.layout),
                          eps=eps, c=gamma, theta=theta)
    x_next = BlockPoint(xf - (1.0 + theta) * gamma * v, x.layout)
    return cert, x_next


def make_fbhf_oracle(p: FbhfProblem, gamma: float, theta: float):
    """Step oracle for hpe_core.run (identity metric)."""

    def oracle(x: BlockPoint, M, cfg) -> HpeCertificate:
        return fbhf_step(x, p, gamma, theta, sigma=cfg.sigma)[0]

    return oracle


# ---------------------------------------------------------------------------
# Projective proximal-gradient consensus splitting
# ---------------------------------------------------------------------------


@dataclass
class PpgProblem:
    """min r(x) + (1/n) sum_i f_i(x) + (1/n) sum_i g_i(x).

    Iterates live in the n-fold product space; each copy carries one summand.
    L is the common Lipschitz constant of the gradients.
    """

    n: int
    dim: int
    prox_r: ProxFn
    prox_g: List[ProxFn]
    grad_f: List[Callable[[np.ndarray], np.ndarray]]
    L: float
    alpha: float

    def __post_init__(self):
        if self.n < 1 or self.alpha <= 0 or self.L < 0:
            raise ValueError("need n >= 1, alpha > 0, L >= 0")
        if len(self.prox_g) != self.n or len(self.grad_f) != self.n:
            raise ValueError("one prox_g and grad_f per summand required")

    @property
    def layout(self) -> BlockLayout:
        return BlockLayout((self.dim,) * self.n)


def ppg_max_theta(p: PpgProblem, sigma: float) -> float:
    return sigma - p.L * p.alpha / 2.0


def ppg_step(z: BlockPoint, p: PpgProblem, theta: float,
             sigma: Optional[float] = None) -> Tuple[HpeCertificate, BlockPoint]:
    """One certified consensus splitting step (metric I, c = 1).

    Consensus point x+ = prox_{alpha r}(mean z_i); per-copy proxes at the
    gradient-corrected reflections; over-relaxed z update.  The certificate's
    eps carries the factor alpha from the enlargement scaling.
    """
    if sigma is not None and theta > ppg_max_theta(p, sigma) + 1e-12:
        raise ValueError("theta exceeds the admissible bound sigma - L*alpha/2")
    zs = z.blocks()
    mean = sum(zs) / p.n
    xc = p.prox_r.evaluate(p.alpha, mean)
    x_next: List[np.ndarray] = []
    for i in range(p.n):
        u = 2.0 * xc - zs[i] - p.alpha * p.grad_f[i](xc)
        x_next.append(p.prox_g[i].evaluate(p.alpha, u))
    y = BlockPoint.from_blocks([zs[i] + x_next[i] - xc for i in range(p.n)])
    v = BlockPoint.from_blocks([xc - x_next[i] for i in range(p.n)])
    eps_raw = 0.25 * p.L * sum(float(np.dot(x_next[i] - xc, x_next[i] - xc))
                               for i in range(p.n))
    cert = HpeCertificate(y=BlockPoint(y.data, z.layout),
                          v=BlockPoint(v.data, z.layout),
                          eps=p.alpha * eps_raw, c=1.0, theta=theta)
    z_new = BlockPoint(z.data - (1.0 + theta) * cert.v.data, z.layout)
    return cert, z_new


def make_ppg_oracle(p: PpgProblem, theta: float):
    def oracle(z: BlockPoint, M, cfg) -> HpeCertificate:
        return ppg_step(z, p, theta, sigma=cfg.sigma)[0]

    return oracle


# ---------------------------------------------------------------------------
# Condat-Vu primal-dual splitting
# ---------------------------------------------------------------------------


def _prox_conjugate(prox_h: ProxFn, t: float, u: np.ndarray) -> np.ndarray:
    """prox_{t h*}(u) = u - t prox_{h/t}(u/t) (Moreau identity).

    prox_{h/t} is the prox of h with step 1/t in the argmin convention of
    :class:`~opsplit.prox_problems.ProxFn`.
    """
    return u - t * prox_h.evaluate(1.0 / t, u / t)


@dataclass
class CondatVuProblem:
    """min_x f(x) + g(x) + h(Bx) with smooth f (Lipschitz-L gradient).

    ``B.apply`` maps primal to dual; ``prox_h`` is the prox of h itself (the
    conjugate prox comes from the Moreau identity).  The saddle metric is
    [[r I, -B*], [-B, s I]], positive definite iff r s > ||B||^2.
    """

    dim_x: int
    dim_y: int
    prox_g: ProxFn
    prox_h: ProxFn
    B: LinearMap
    r: float
    s: float
    grad_f: Optional[Callable[[np.ndarray], np.ndarray]] = None
    L: float = 0.0
    _metric: Metric = field(init=False, repr=False, default=None)
    _bnorm: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        if self.r <= 0 or self.s <= 0 or self.L < 0:
            raise ValueError("need r, s > 0 and L >= 0")
        if (self.B.domain_dim, self.B.codomain_dim) != (self.dim_x, self.dim_y):
            raise ValueError("B dimensions inconsistent with dim_x/dim_y")
        Bd = self.B.to_dense()
        svals = np.linalg.svd(Bd, compute_uv=False) if min(Bd.shape) else np.zeros(1)
        self._bnorm = float(svals[0]) if svals.size else 0.0
        if self.strong_gap <= 0:
            raise ValueError("need s - ||B||^2 / r > 0 for a positive metric")
        schur = self.s * np.eye(self.dim_y) - Bd @ Bd.T / self.r
        chol = scipy.linalg.cho_factor(schur)
        r_, s_ = self.r, self.s
        B = self.B

        def apply(u):
            a, b = u[:self.dim_x], u[self.dim_x:]
            return np.concatenate([r_ * a - B.adjoint_apply(b),
                                   -B.apply(a) + s_ * b])

        def solve(u):
            f, g = u[:self.dim_x], u[self.dim_x:]
            b = scipy.linalg.cho_solve(chol, g + B.apply(f) / r_)
            a = (f + B.adjoint_apply(b)) / r_
            return np.concatenate([a, b])

        half_gap = math.sqrt(((r_ - s_) / 2.0) ** 2 + self._bnorm ** 2)
        self._metric = CallableMetric(apply, solve,
                                      omega_lower=(r_ + s_) / 2.0 - half_gap,
                                      omega_upper=(r_ + s_) / 2.0 + half_gap)

    @property
    def strong_gap(self) -> float:
        """s - ||B||^2 / r, the positivity margin of the saddle metric."""
        return self.s - self._bnorm ** 2 / self.r

    @property
    def primal_gap(self) -> float:
        """r - ||B||^2 / s: coefficient bounding ||d||_M^2 below by ||dx||^2.

        This (not strong_gap) is the constant that enters the admissible
        over-relaxation, because the enlargement error lives on the primal
        block.  Both gaps are positive exactly when r s > ||B||^2.
        """
        return self.r - self._bnorm ** 2 / self.s

    @property
    def layout(self) -> BlockLayout:
        return BlockLayout((self.dim_x, self.dim_y))

    def metric(self) -> Metric:
        return self._metric


def condat_vu_max_theta(p: CondatVuProblem, sigma: float) -> float:
    return sigma - p.L / (2.0 * p.primal_gap)


def condat_vu_step(z: BlockPoint, p: CondatVuProblem, theta: float,
                   sigma: Optional[float] = None
                   ) -> Tuple[HpeCertificate, BlockPoint]:
    """One certified primal-dual step under the saddle metric (c = 1).

    The native over-relaxed update z + (1 + theta)(w - z) is returned and is
    identical to the kernel's extra-gradient correction for this certificate
    (checked to 1e-12 on every call).
    """
    if sigma is not None and theta > condat_vu_max_theta(p, sigma) + 1e-12:
        raise ValueError("theta exceeds sigma - L / (2 (r - ||B||^2/s))")
    x, y = z.block(0), z.block(1)
    gf = p.grad_f(x) if p.grad_f is not None else np.zeros_like(x)
    xt = p.prox_g.evaluate(1.0 / p.r, x - (gf + p.B.adjoint_apply(y)) / p.r)
    yt = _prox_conjugate(p.prox_h, 1.0 / p.s, y + p.B.apply(2.0 * xt - x) / p.s)
    w = BlockPoint(np.concatenate([xt, yt]), z.layout)
    d = z - w
    v = BlockPoint(p.metric().apply(d.data), z.layout)
    eps = 0.25 * p.L * float(np.dot(x - xt, x - xt))
    cert = HpeCertificate(y=w, v=v, eps=eps, c=1.0, theta=theta)
    z_new = BlockPoint(z.data + (1.0 + theta) * (w.data - z.data), z.layout)
    kernel = extragradient_step(z, cert, p.metric())
    drift = np.max(np.abs(kernel.data - z_new.data))
    if drift > 1e-12 * (1.0 + float(np.max(np.abs(z_new.data)))):
        raise RuntimeError("native update deviates from the kernel step "
                           "by %.3e" % drift)
    return cert, z_new


def make_condat_vu_oracle(p: CondatVuProblem, theta: float):
    def oracle(z: BlockPoint, M, cfg) -> HpeCertificate:
        return condat_vu_step(z, p, theta, sigma=cfg.sigma)[0]

    return oracle


# ---------------------------------------------------------------------------
# Adaptive-step primal-dual splitting
# ---------------------------------------------------------------------------


@dataclass
class AfbasPdProblem:
    """min_x f(x) + g(x) + h(Bx) with an adaptive over-relaxation.

    Nonsymmetric preconditioner R = [[I/gamma1, -B*], [(1-theta)B, I/gamma2]]
    and step shaper S = [[I, -mu gamma1 (2-theta) B*],
    [gamma2 (1-mu)(2-theta) B, I]]; the certified metric is M = R S^{-1}.
    theta here is the scheme's structural parameter (not the over-relaxation);
    the over-relaxation is alpha_k - 1 with alpha_k computed per step.
    """

    dim_x: int
    dim_y: int
    prox_g: ProxFn
    prox_h: ProxFn
    B: LinearMap
    gamma1: float
    gamma2: float
    theta: float = 2.0
    mu: float = 0.5
    lam: float = 1.0
    grad_f: Optional[Callable[[np.ndarray], np.ndarray]] = None
    L: float = 0.0
    _metric: Metric = field(init=False, repr=False, default=None)
    _s_chol: object = field(init=False, repr=False, default=None)
    _r_chol: object = field(init=False, repr=False, default=None)
    _bnorm: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        if self.gamma1 <= 0 or self.gamma2 <= 0:
            raise ValueError("gamma1, gamma2 must be positive")
        if self.theta < 0 or not 0.0 <= self.mu <= 1.0 or self.L < 0:
            raise ValueError("need theta >= 0, mu in [0,1], L >= 0")
        Bd = self.B.to_dense()
        svals = np.linalg.svd(Bd, compute_uv=False) if min(Bd.shape) else np.zeros(1)
        self._bnorm = float(svals[0]) if svals.size else 0.0
        if self.curvature_margin <= self.L / 4.0:
            raise ValueError("need 1/gamma1 - gamma2 theta^2 ||B||^2 / 4 > L/4")
        if not 0.0 < self.lam < self.delta:
            raise ValueError("lam must lie in (0, delta), delta=%.6g" % self.delta)
        c1 = self.mu * self.gamma1 * (2.0 - self.theta)
        c2 = self.gamma2 * (1.0 - self.mu) * (2.0 - self.theta)
        BtB = Bd.T @ Bd
        s_mat = np.eye(self.dim_x) + c1 * c2 * BtB
        xi_mat = np.eye(self.dim_x) / (self.gamma1 * self.gamma2) \
            + (1.0 - self.theta) * BtB
        if scipy.linalg.eigvalsh(xi_mat)[0] <= 0:
            raise ValueError("R block inversion breaks down: "
                             "1/(gamma1 gamma2) + (1-theta) B*B not SPD")
        self._s_chol = scipy.linalg.cho_factor(s_mat)
        self._r_chol = scipy.linalg.cho_factor(xi_mat)
        # dense M = R S^-1 for spectral bounds only; apply/solve stay composed
        nx, ny = self.dim_x, self.dim_y
        eye = np.eye(nx + ny)
        R_dense = np.column_stack([self.apply_R(e) for e in eye])
        S_dense = np.column_stack([self.apply_S(e) for e in eye])
        M_dense = R_dense @ np.linalg.inv(S_dense)
        if np.max(np.abs(M_dense - M_dense.T)) > 1e-8 * (1 + np.max(np.abs(M_dense))):
            raise ValueError("R S^-1 is not self-adjoint for these parameters")
        eigs = scipy.linalg.eigvalsh(0.5 * (M_dense + M_dense.T))
        if eigs[0] <= 0:
            raise ValueError("metric R S^-1 is not positive definite")
        self._metric = CallableMetric(
            lambda u: self.apply_R(self.solve_S(u)),
            lambda u: self.apply_S(self.solve_R(u)),
            omega_lower=float(eigs[0]), omega_upper=float(eigs[-1]))

    # -- structural operators ------------------------------------------------

    def _split(self, u):
        return u[:self.dim_x], u[self.dim_x:]

    def apply_R(self, u: np.ndarray) -> np.ndarray:
        a, b = self._split(u)
        return np.concatenate([a / self.gamma1 - self.B.adjoint_apply(b),
                               (1.0 - self.theta) * self.B.apply(a)
                               + b / self.gamma2])

    def apply_S(self, u: np.ndarray) -> np.ndarray:
        a, b = self._split(u)
        c1 = self.mu * self.gamma1 * (2.0 - self.theta)
        c2 = self.gamma2 * (1.0 - self.mu) * (2.0 - self.theta)
        return np.concatenate([a - c1 * self.B.adjoint_apply(b),
                               c2 * self.B.apply(a) + b])

    def solve_S(self, u: np.ndarray) -> np.ndarray:
        f, g = self._split(u)
        c1 = self.mu * self.gamma1 * (2.0 - self.theta)
        c2 = self.gamma2 * (1.0 - self.mu) * (2.0 - self.theta)
        a = scipy.linalg.cho_solve(self._s_chol, f + c1 * self.B.adjoint_apply(g))
        b = g - c2 * self.B.apply(a)
        return np.concatenate([a, b])

    def solve_R(self, u: np.ndarray) -> np.ndarray:
        f, g = self._split(u)
        rhs = (f + self.gamma2 * self.B.adjoint_apply(g)) / self.gamma2
        a = scipy.linalg.cho_solve(self._r_chol, rhs)
        b = self.gamma2 * (g - (1.0 - self.theta) * self.B.apply(a))
        return np.concatenate([a, b])

    # -- derived constants ----------------------------------------------------

    @property
    def curvature_margin(self) -> float:
        return 1.0 / self.gamma1 - self.gamma2 * self.theta ** 2 * self._bnorm ** 2 / 4.0

    @property
    def delta(self) -> float:
        return 2.0 - self.L / (2.0 * self.curvature_margin)

    @property
    def layout(self) -> BlockLayout:
        return BlockLayout((self.dim_x, self.dim_y))

    def metric(self) -> Metric:
        return self._metric


def afbas_pd_step(z: BlockPoint, p: AfbasPdProblem, sigma: float = 0.5,
                  lam: Optional[float] = None
                  ) -> Tuple[HpeCertificate, BlockPoint]:
    """One certified adaptive primal-dual step (c = 1, metric R S^{-1}).

    alpha_k = lam * (1/2)||d||^2_{R+R*} / <S d, R d> with d = w - z, then
    lam is capped along the direction so the relative-error criterion holds
    with the given sigma; theta_k = alpha_k - 1.
    """
    x, y = z.block(0), z.block(1)
    gf = p.grad_f(x) if p.grad_f is not None else np.zeros_like(x)
    xb = p.prox_g.evaluate(p.gamma1,
                           x - p.gamma1 * (p.B.adjoint_apply(y) + gf))
    u = y + p.gamma2 * p.B.apply((1.0 - p.theta) * x + p.theta * xb)
    yb = _prox_conjugate(p.prox_h, p.gamma2, u)
    w = BlockPoint(np.concatenate([xb, yb]), z.layout)
    d = (z - w).data
    dx, dy = d[:p.dim_x], d[p.dim_x:]
    if np.linalg.norm(d) == 0.0:
        cert = HpeCertificate(y=w, v=BlockPoint(np.zeros_like(d), z.layout),
                              eps=0.0, c=1.0, theta=0.0)
        return cert, z.copy()
    Rd = p.apply_R(d)
    Sd = p.apply_S(d)
    n2_rr = 2.0 * float(np.dot(d, Rd))                      # ||d||^2_{R+R*}
    denom = float(np.dot(Sd, Rd))                           # ||d||^2_{S*R}
    if denom <= 0:
        raise RuntimeError("degenerate adaptive-step denominator")
    eps = 0.25 * p.L * float(np.dot(dx, dx))
    d_M = float(np.dot(d, p.metric().apply(d)))
    lam_eff = p.lam if lam is None else lam
    cap = 0.999 * (n2_rr - (1.0 - sigma) * d_M - 2.0 * eps) / (0.5 * n2_rr)
    if cap <= 0:
        raise RuntimeError("no admissible step along this direction "
                           "(criterion cap %.3e)" % cap)
    lam_eff = min(lam_eff, cap)
    alpha = lam_eff * 0.5 * n2_rr / denom
    theta_k = alpha - 1.0
    cert = HpeCertificate(y=w, v=BlockPoint(Rd, z.layout), eps=eps,
                          c=1.0, theta=theta_k)
    z_new = BlockPoint(z.data - alpha * Sd, z.layout)
    return cert, z_new


def make_afbas_pd_oracle(p: AfbasPdProblem):
    def oracle(z: BlockPoint, M, cfg) -> HpeCertificate:
        return afbas_pd_step(z, p, sigma=cfg.sigma)[0]

    return oracle


# ---------------------------------------------------------------------------
# Builders mapping a QP instance onto each scheme
# ---------------------------------------------------------------------------


def affine_projector(G: np.ndarray, b: np.ndarray):
    """Euclidean projector onto {x : G x = b} (resolvent of its normal cone)."""
    G = np.asarray(G, dtype=float)
    b = np.asarray(b, dtype=float)
    gram = scipy.linalg.cho_factor(G @ G.T)

    def project(u: np.ndarray) -> np.ndarray:
        return u - G.T @ scipy.linalg.cho_solve(gram, G @ u - b)

    return project


def fbhf_from_qp(inst, sigma: float = 0.5):
    """FBHF coding: A = normal cone of {Gx=b}, B1 = grad of the quadratic.

    Returns (problem, gamma, theta_max, x_ref); pick theta <= theta_max.
    """
    Q, c, G, b = inst.Q_full, inst.c_full, inst.G_full, inst.b
    proj = affine_projector(G, b)
    Lq = float(scipy.linalg.eigvalsh(Q)[-1])
    beta = 1.0 / Lq
    prob = FbhfProblem(dim=Q.shape[0],
                       resolvent=lambda gamma, u: proj(u),
                       B1=lambda u: Q @ u + c, beta=beta)
    gamma = beta * sigma  # theta_max = sigma - gamma/(2 beta) = sigma/2
    theta_max = fbhf_max_theta(prob, gamma, sigma)
    x_ref = BlockPoint(np.concatenate(inst.x_star), prob.layout)
    return prob, gamma, theta_max, x_ref


def ppg_from_qp(inst, n: int = 3, sigma: float = 0.5):
    """Consensus coding: r = affine indicator, f_i = the full quadratic.

    Returns (problem, theta_max, z_ref); the reference point is the known
    fixed point z_i* = x* - alpha grad f_i(x*).
    """
    Q, c, G, b = inst.Q_full, inst.c_full, inst.G_full, inst.b
    proj = affine_projector(G, b)
    Lq = float(scipy.linalg.eigvalsh(Q)[-1])
    alpha = sigma / Lq  # leaves theta headroom up to sigma/2
    prox_r = ProxFn(lambda t, u: proj(u), lambda u: 0.0, name="affine")
    prob = PpgProblem(n=n, dim=Q.shape[0], prox_r=prox_r,
                      prox_g=[ProxFn.zero() for _ in range(n)],
                      grad_f=[(lambda u, Q=Q, c=c: Q @ u + c)] * n,
                      L=Lq, alpha=alpha)
    theta_max = ppg_max_theta(prob, sigma)
    x_star = np.concatenate(inst.x_star)
    g_star = Q @ x_star + c
    z_ref = BlockPoint(np.tile(x_star - alpha * g_star, n), prob.layout)
    return prob, theta_max, z_ref


def condat_vu_from_qp(inst, sigma: float = 0.5, r: Optional[float] = None,
                      s: Optional[float] = None):
    """Primal-dual coding: f = quadratic, g = 0, h = indicator of {b}, B = G.

    Returns (problem, theta_max, z_ref = (x*, y*)).  Omitted scale parameters
    r, s default to values with comfortable margin in the metric condition.
    """
    Q, c, G, b = inst.Q_full, inst.c_full, inst.G_full, inst.b
    Lq = float(scipy.linalg.eigvalsh(Q)[-1])
    bnorm = float(np.linalg.svd(G, compute_uv=False)[0]) if b.size else 0.0
    if r is None:
        r = bnorm + Lq / sigma + 1.0
    if s is None:
        s = bnorm + Lq / sigma + 1.0
    prob = CondatVuProblem(dim_x=Q.shape[0], dim_y=b.size,
                           prox_g=ProxFn.zero(), prox_h=ProxFn.constant(b),
                           B=LinearMap.from_dense(G), r=r, s=s,
                           grad_f=lambda u: Q @ u + c, L=Lq)
    theta_max = condat_vu_max_theta(prob, sigma)
    z_ref = BlockPoint(np.concatenate([np.concatenate(inst.x_star),
                                       inst.y_star]), prob.layout)
    return prob, theta_max, z_ref


def afbas_pd_from_qp(inst, theta: float = 2.0, mu: float = 0.5,
                     lam: float = 1.0):
    """Adaptive primal-dual coding of the same saddle problem.

    Returns (problem, z_ref = (x*, y*)).
    """
    Q, c, G, b = inst.Q_full, inst.c_full, inst.G_full, inst.b
    Lq = float(scipy.linalg.eigvalsh(Q)[-1])
    bnorm = float(np.linalg.svd(G, compute_uv=False)[0]) if b.size else 0.0
    gamma2 = 1.0 / (bnorm + 1.0)
    # 1/gamma1 > L/4 + gamma2 theta^2 ||B||^2 / 4 with a factor-2 margin
    gamma1 = 1.0 / (2.0 * (Lq / 4.0 + gamma2 * theta ** 2 * bnorm ** 2 / 4.0 + 0.5))
    prob = AfbasPdProblem(dim_x=Q.shape[0], dim_y=b.size,
                          prox_g=ProxFn.zero(), prox_h=ProxFn.constant(b),
                          B=LinearMap.from_dense(G), gamma1=gamma1,
                          gamma2=gamma2, theta=theta, mu=mu, lam=lam,
                          grad_f=lambda u: Q @ u + c, L=Lq)
    z_ref = BlockPoint(np.concatenate([np.concatenate(inst.x_star),
                                       inst.y_star]), prob.layout)
    return prob, z_ref
