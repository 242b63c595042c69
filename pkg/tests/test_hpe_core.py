"""Kernel-level checks: criterion algebra, schedules, bounds, aggregates."""

import json
import math

import numpy as np
import pytest

from opsplit import hpe_core
from opsplit.hpe_core import (CriterionViolation, HpeCertificate, HpeConfig,
                              MetricScheduleViolation, TRACE_COLUMNS,
                              check_criterion, default_xi_schedule,
                              ergodic_aggregate, ergodic_series,
                              extragradient_step, linear_rate_factor,
                              loglog_slope, make_affine_resolvent_oracle,
                              pointwise_bound, validate_metric_update)
from opsplit.linops import (BlockDiagonalMetric, BlockLayout, BlockPoint,
                            IdentityMetric, ScaledIdentityMetric)


def _pt(arr):
    arr = np.asarray(arr, dtype=float)
    return BlockPoint(arr, BlockLayout((arr.size,)))


# ---------------------------------------------------------------------------
# Criterion evaluation
# ---------------------------------------------------------------------------


def test_criterion_zero_residual_certificate():
    # v = 0, eps = 0, y = x: both sides vanish and the check passes
    x = _pt([1.0, -2.0])
    cert = HpeCertificate(y=x.copy(), v=_pt([0.0, 0.0]), eps=0.0)
    rep = check_criterion(x, cert, IdentityMetric(), sigma=0.5)
    assert rep.ok and rep.lhs == 0.0 and rep.rhs == 0.0


def test_criterion_exact_resolvent_identity():
    # for an exact resolvent step c*v + (y - x) = 0, so with M = I
    # lhs = theta ||c v||^2 + 2 c eps and rhs = sigma ||y - x||^2
    x = _pt([2.0, 0.0, -4.0])
    y = _pt(x.data / 2.0)   # resolvent of T = I at c = 1
    v = _pt(y.data)
    cert = HpeCertificate(y=y, v=v, eps=0.0, c=1.0, theta=0.25)
    rep = check_criterion(x, cert, IdentityMetric(), sigma=0.5)
    half = float(np.dot(y.data, y.data))
    assert rep.lhs == pytest.approx(0.25 * half, rel=1e-14)
    assert rep.rhs == pytest.approx(0.5 * half, rel=1e-14)
    assert rep.ok
    # theta = sigma is the equality endpoint; beyond it the check fails
    cert_hi = HpeCertificate(y=y, v=v, eps=0.0, c=1.0, theta=0.6)
    assert not check_criterion(x, cert_hi, IdentityMetric(), sigma=0.5).ok


def test_criterion_respects_metric_weighting():
    M = ScaledIdentityMetric(4.0)
    x = _pt([1.0])
    y = _pt([0.5])
    v = _pt([2.0])  # M^-1 v = 0.5, so c M^-1 v + (y - x) = 0
    cert = HpeCertificate(y=y, v=v, eps=0.0, c=1.0, theta=0.0)
    rep = check_criterion(x, cert, M, sigma=0.5)
    assert rep.lhs == pytest.approx(0.0, abs=1e-15)
    assert rep.rhs == pytest.approx(0.5 * 4.0 * 0.25, rel=1e-14)


def test_criterion_eps_contributes_2c_eps():
    x = _pt([1.0])
    cert = HpeCertificate(y=_pt([1.0]), v=_pt([0.0]), eps=0.3, c=2.0)
    rep = check_criterion(x, cert, IdentityMetric(), sigma=0.5)
    assert rep.lhs == pytest.approx(2.0 * 2.0 * 0.3)
    assert not rep.ok


def test_extragradient_step_formula():
    x = _pt([1.0, 2.0])
    cert = HpeCertificate(y=x.copy(), v=_pt([0.5, -1.0]), eps=0.0,
                          c=2.0, theta=0.5)
    out = extragradient_step(x, cert, IdentityMetric())
    assert np.allclose(out.data, x.data - 1.5 * 2.0 * cert.v.data)
    # a weighted metric divides the step by its scalar
    out_m = extragradient_step(x, cert, ScaledIdentityMetric(3.0))
    assert np.allclose(out_m.data, x.data - 1.5 * 2.0 * cert.v.data / 3.0)


# ---------------------------------------------------------------------------
# Schedules and metric validation
# ---------------------------------------------------------------------------


def test_xi_schedule_is_summable():
    cfg = HpeConfig(xi0=0.1)
    assert cfg.xi(1) == pytest.approx(0.1 / 4.0)
    s = cfg.xi_partial_sum(100_000)
    assert s < 0.1 * (math.pi ** 2 / 6.0)
    assert cfg.xi_capital(100_000) <= math.exp(s) + 1e-12


def test_config_rejects_bad_parameters():
    with pytest.raises(ValueError):
        HpeConfig(sigma=1.0)
    with pytest.raises(ValueError):
        HpeConfig(theta_min=-1.0)
    with pytest.raises(ValueError):
        HpeConfig(c_min=0.0)


def test_validate_metric_update_blockwise():
    lay = BlockLayout((2, 3))
    M0 = BlockDiagonalMetric([1.0, 2.0], lay)
    ok = BlockDiagonalMetric([1.009, 2.0], lay)
    assert validate_metric_update(M0, ok, xi_k=0.01, omega_lower=0.5)
    grew = BlockDiagonalMetric([1.02, 2.0], lay)
    assert not validate_metric_update(M0, grew, xi_k=0.01, omega_lower=0.5)
    sank = BlockDiagonalMetric([0.4, 2.0], lay)
    assert not validate_metric_update(M0, sank, xi_k=0.01, omega_lower=0.5)


def test_validate_metric_update_dense_path():
    from opsplit.linops import DenseMetric
    rng = np.random.default_rng(0)
    B = rng.standard_normal((4, 4))
    base = B @ B.T + np.eye(4)
    M0 = DenseMetric(base)
    assert validate_metric_update(M0, DenseMetric(1.005 * base),
                                  xi_k=0.01, omega_lower=1e-6)
    assert not validate_metric_update(M0, DenseMetric(1.05 * base),
                                      xi_k=0.01, omega_lower=1e-6)


# ---------------------------------------------------------------------------
# The kernel loop
# ---------------------------------------------------------------------------


def _affine_setup(n=6, seed=0):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    W = rng.standard_normal((n, n))
    K = B @ B.T / n + np.eye(n) + 0.5 * (W - W.T)
    q = rng.standard_normal(n)
    x_star = np.linalg.solve(K, -q)
    return K, q, x_star


def test_run_converges_on_affine_operator():
    K, q, x_star = _affine_setup()
    lay = BlockLayout((K.shape[0],))
    cfg = HpeConfig(sigma=0.5, max_iters=2000, tol_residual=1e-10)
    oracle = make_affine_resolvent_oracle(K, q)
    res = hpe_core.run(oracle, BlockPoint(np.ones(K.shape[0]), lay),
                       IdentityMetric(), cfg,
                       ref_solution=BlockPoint(x_star, lay))
    assert res.converged and res.reason == "residual"
    assert np.linalg.norm(res.solution.data - x_star) < 1e-8
    assert len(res.trace) == res.iterations
    # metric distances to the reference shrink monotonically
    dists = [r.dist_M_sq for r in res.trace]
    assert all(d1 <= d0 * (1 + 1e-12) for d0, d1 in zip(dists, dists[1:]))


def test_run_rejects_lying_oracle():
    K, q, _ = _affine_setup()
    lay = BlockLayout((K.shape[0],))

    def liar(x, M, cfg):
        return HpeCertificate(y=BlockPoint(x.data + 1.0, lay),
                              v=BlockPoint(np.zeros(lay.dim), lay),
                              eps=10.0)

    with pytest.raises(CriterionViolation):
        hpe_core.run(liar, BlockPoint(np.ones(lay.dim), lay),
                     IdentityMetric(), HpeConfig(max_iters=5))


def test_run_rejects_schedule_breaking_metric():
    K, q, _ = _affine_setup()
    lay = BlockLayout((K.shape[0],))
    oracle = make_affine_resolvent_oracle(K, q)

    def runaway(k, x, cert, M):
        return BlockDiagonalMetric([2.0 ** k], lay)

    cfg = HpeConfig(max_iters=5, tol_residual=0.0)
    with pytest.raises(MetricScheduleViolation):
        hpe_core.run(oracle, BlockPoint(np.ones(lay.dim), lay),
                     BlockDiagonalMetric([1.0], lay), cfg,
                     metric_update=runaway)


def test_trace_csv_row_count_matches_iterations(tmp_path):
    K, q, _ = _affine_setup()
    lay = BlockLayout((K.shape[0],))
    cfg = HpeConfig(max_iters=17, tol_residual=0.0)
    res = hpe_core.run(make_affine_resolvent_oracle(K, q),
                       BlockPoint(np.ones(lay.dim), lay), IdentityMetric(), cfg)
    path = tmp_path / "trace.csv"
    res.trace.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert len(lines) - 1 == res.iterations == 17


# ---------------------------------------------------------------------------
# Complexity instrumentation
# ---------------------------------------------------------------------------


def test_pointwise_bound_closed_form():
    cfg = HpeConfig(sigma=0.5, theta_min=0.5, c_min=1.0, xi0=0.0)
    d0 = 2.0
    for k in (1, 4, 36):
        pb = pointwise_bound(k, cfg, d0)
        # independent route: constant metric, xi = 0
        assert pb.bound_v == pytest.approx(
            math.sqrt(4.0 / (k * 0.5 * 1.5 ** 3)) * d0, rel=1e-14)
        assert pb.bound_eps == pytest.approx(
            d0 ** 2 / (k * 0.5 * 1.5 ** 2), rel=1e-14)
    # O(1/sqrt(k)) and O(1/k) decay
    assert pointwise_bound(4, cfg, d0).bound_v == pytest.approx(
        pointwise_bound(1, cfg, d0).bound_v / 2.0)
    assert pointwise_bound(4, cfg, d0).bound_eps == pytest.approx(
        pointwise_bound(1, cfg, d0).bound_eps / 4.0)


def test_pointwise_bound_inflates_with_xi():
    base = HpeConfig(sigma=0.5, theta_min=0.0, xi0=0.0)
    inflated = HpeConfig(sigma=0.5, theta_min=0.0, xi0=0.5)
    assert pointwise_bound(10, inflated, 1.0).bound_v \
        > pointwise_bound(10, base, 1.0).bound_v


def _random_certs(n, dim, seed):
    rng = np.random.default_rng(seed)
    lay = BlockLayout((dim,))
    certs = []
    for _ in range(n):
        certs.append(HpeCertificate(
            y=BlockPoint(rng.standard_normal(dim), lay),
            v=BlockPoint(rng.standard_normal(dim), lay),
            eps=float(rng.uniform(0, 0.5)),
            c=float(rng.uniform(0.5, 2.0)),
            theta=float(rng.uniform(-0.5, 1.0))))
    return certs


def test_ergodic_series_matches_aggregate_at_every_prefix():
    certs = _random_certs(30, 4, seed=7)
    alpha = np.random.default_rng(8).uniform(0.5, 2.0, size=30)
    v_norms, eps_bars = ergodic_series(certs, alpha)
    for k in (1, 3, 17, 30):
        _, v_bar, eps_bar = ergodic_aggregate(certs[:k], alpha[:k])
        assert v_norms[k - 1] == pytest.approx(v_bar.norm(), rel=1e-10, abs=1e-12)
        assert eps_bars[k - 1] == pytest.approx(eps_bar, rel=1e-9, abs=1e-10)


def test_ergodic_eps_nonnegative_for_monotone_operator():
    # certificates from an exact resolvent of a monotone affine operator:
    # the correction term keeps eps_bar >= 0
    K, q, _ = _affine_setup(n=5, seed=3)
    lay = BlockLayout((5,))
    cfg = HpeConfig(max_iters=200, tol_residual=0.0)
    res = hpe_core.run(make_affine_resolvent_oracle(K, q),
                       BlockPoint(np.ones(5), lay), IdentityMetric(), cfg)
    certs = [r.cert for r in res.trace]
    _, eps_bars = ergodic_series(certs, np.ones(len(certs)))
    assert eps_bars.min() >= -1e-12


def test_linear_rate_factor_value_and_validation():
    rho = linear_rate_factor(kappa=2.0, sigma=0.5, theta_k=0.0, c_min=1.0,
                             Xi=1.0, omega_upper=1.0, omega_lower=1.0)
    a = 1.0 + 2.0
    b = 1.0 + math.sqrt(0.5)
    assert rho == pytest.approx(0.5 / (a ** 2 * b ** 2), rel=1e-14)
    # negative theta adds the 4 max(-theta, 0)/(1+theta)^2 term
    rho_neg = linear_rate_factor(2.0, 0.5, -0.25, 1.0, 1.0, 1.0, 1.0)
    assert rho_neg < rho
    with pytest.raises(ValueError):
        linear_rate_factor(0.0, 0.5, 0.0, 1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        linear_rate_factor(2.0, 0.5, 0.0, 1.0, 0.5, 1.0, 1.0)


def test_loglog_slope_recovers_power_law():
    ks = np.arange(1, 200, dtype=float)
    assert loglog_slope(ks, 3.0 / ks) == pytest.approx(-1.0, abs=1e-10)
    assert loglog_slope(ks, 2.0 * ks ** -0.5) == pytest.approx(-0.5, abs=1e-10)
    assert loglog_slope(np.array([1.0]), np.array([1.0])) is None
    assert loglog_slope(ks, np.zeros_like(ks)) is None


def test_write_summary_schema(tmp_path):
    K, q, _ = _affine_setup()
    lay = BlockLayout((K.shape[0],))
    cfg = HpeConfig(max_iters=50, tol_residual=0.0)
    res = hpe_core.run(make_affine_resolvent_oracle(K, q),
                       BlockPoint(np.ones(lay.dim), lay), IdentityMetric(), cfg)
    path = tmp_path / "summary.json"
    hpe_core.write_summary(path, res, {"algorithm": "test"},
                           slopes={"pointwise": -1.0, "ergodic": None})
    data = json.loads(path.read_text())
    assert data["schema"] == 1
    assert data["iterations"] == 50
    assert set(data) >= {"config", "converged", "termination", "final",
                         "min_over_k", "slopes", "wall_time_s"}
    assert data["final"]["v_norm"] == res.trace[-1].v_norm
