"""Acceptance gate: one test per end-to-end criterion.

Each test runs the corresponding checker from :mod:`opsplit.acceptance`,
prints its PASS/FAIL line, and asserts the verdict.  Run with ``-s`` to see
the lines as they complete.
"""

from opsplit import acceptance


def _gate(check):
    result = check()
    print(result.line())
    assert result.passed, result.detail
    return result


def test_criterion_invariance():
    _gate(acceptance.check_criterion_invariance)


def test_fejer_contraction():
    _gate(acceptance.check_fejer_contraction)


def test_pointwise_bounds():
    _gate(acceptance.check_pointwise_bounds)


def test_ergodic_rate():
    _gate(acceptance.check_ergodic_rate)


def test_padmm_qp_equivalence():
    _gate(acceptance.check_padmm_qp_equivalence)


def test_direct_vs_kernel():
    _gate(acceptance.check_direct_vs_kernel)


def test_local_linear_rate():
    _gate(acceptance.check_local_linear_rate)


def test_theta_acceleration():
    _gate(acceptance.check_theta_acceleration)


def test_lrr_desk_scale():
    _gate(acceptance.check_lrr_desk_scale)


def test_prox_correctness():
    _gate(acceptance.check_prox_correctness)
