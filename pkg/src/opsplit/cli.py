"""Command-line driver: solve problems, benchmark, query oracles, self-check.

Exit codes: 0 success, 2 configuration error, 3 solver abort.
"""

from __future__ import annotations

import argparse
import sys
import time
from typing import Optional

import numpy as np

from . import acceptance, hpe_core
from .hpe_core import (CriterionViolation, HpeConfig, MetricScheduleViolation)
from .linops import BlockPoint, IdentityMetric
from .padmm_ebb import PadmmConfig, geometric_beta_schedule, run_padmm
from .prox_problems import build_lrr, gen_qp, load_lrr_instance
from .splitters import (afbas_pd_from_qp, condat_vu_from_qp, fbhf_from_qp,
                        make_afbas_pd_oracle, make_condat_vu_oracle,
                        make_fbhf_oracle, make_ppg_oracle, ppg_from_qp)

ALGORITHMS = ("padmm-ebb", "condat-vu", "ppg", "fbhf", "afbas-pd")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Problem descriptors
# ---------------------------------------------------------------------------


def parse_descriptor(text: str) -> dict:
    """Parse 'kind:key=val,key=val' into a dict (values parsed as numbers)."""
    if ":" in text:
        kind, _, rest = text.partition(":")
    else:
        kind, rest = text, ""
    kind = kind.strip().lower()
    if kind not in ("qp", "lrr"):
        raise ConfigError("unknown problem kind %r (expected qp or lrr)" % kind)
    params: dict = {"kind": kind}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        if "=" not in item:
            raise ConfigError("malformed descriptor item %r" % item)
        key, _, val = item.partition("=")
        key = key.strip()
        val = val.strip()
        if key == "manifest":
            params[key] = val
            continue
        try:
            num = float(val)
        except ValueError:
            raise ConfigError("non-numeric value %r for %r" % (val, key))
        params[key] = int(num) if num == int(num) and "e" not in val.lower() \
            and "." not in val else num
    return params


def build_problem(params: dict):
    """Return ('qp', QpInstance) or ('lrr', LrrInstance)."""
    if params["kind"] == "qp":
        inst = gen_qp(int(params.get("seed", 0)), p=int(params.get("p", 2)),
                      n_i=int(params.get("n", 5)), m=int(params.get("m", 3)))
        return "qp", inst
    if "manifest" in params:
        return "lrr", load_lrr_instance(params["manifest"])
    seed = int(params.get("seed", 0))
    d = int(params.get("d", 40))
    n = int(params.get("n", 40))
    X = np.random.default_rng(seed).standard_normal((d, n))
    inst = build_lrr(X, lam=float(params.get("lam", 1e3)),
                     mu=float(params.get("mu", 1e4)),
                     gamma=float(params.get("gamma", 1e4)))
    return "lrr", inst


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def _theta_or_auto(text: str) -> Optional[float]:
    if text == "auto":
        return None
    try:
        return float(text)
    except ValueError:
        raise ConfigError("theta must be a number or 'auto'")


def _run_splitter(args, inst, theta: Optional[float]):
    sigma = args.sigma
    cfg = HpeConfig(sigma=sigma, xi0=args.xi0, max_iters=args.max_iters,
                    tol_residual=args.tol)
    if args.algorithm == "fbhf":
        prob, gamma, tmax, ref = fbhf_from_qp(inst, sigma=sigma)
        th = 0.9 * tmax if theta is None else theta
        if th > tmax + 1e-12:
            raise ConfigError("theta %.4g violates the step condition "
                              "(max %.4g at gamma=%.4g)" % (th, tmax, gamma))
        oracle = make_fbhf_oracle(prob, gamma, th)
        M0 = IdentityMetric()
    elif args.algorithm == "ppg":
        prob, tmax, ref = ppg_from_qp(inst, sigma=sigma)
        th = 0.9 * tmax if theta is None else theta
        if th > tmax + 1e-12:
            raise ConfigError("theta %.4g violates theta + L*alpha/2 <= sigma "
                              "(max %.4g)" % (th, tmax))
        oracle = make_ppg_oracle(prob, th)
        M0 = IdentityMetric()
    elif args.algorithm == "condat-vu":
        prob, tmax, ref = condat_vu_from_qp(inst, sigma=sigma,
                                            r=args.cv_r, s=args.cv_s)
        th = 0.9 * tmax if theta is None else theta
        if th > tmax + 1e-12:
            raise ConfigError("theta %.4g violates "
                              "theta + L/(2(r - ||B||^2/s)) <= sigma "
                              "(max %.4g)" % (th, tmax))
        oracle = make_condat_vu_oracle(prob, th)
        M0 = prob.metric()
    else:  # afbas-pd
        prob, ref = afbas_pd_from_qp(inst)
        oracle = make_afbas_pd_oracle(prob)
        M0 = prob.metric()
    x0 = BlockPoint.zeros(prob.layout)
    result = hpe_core.run(oracle, x0, M0, cfg, ref_solution=ref)
    return result, cfg, {}


def cmd_solve(args) -> int:
    params = parse_descriptor(args.problem)
    kind, inst = build_problem(params)
    theta = _theta_or_auto(args.theta)
    if args.algorithm == "padmm-ebb":
        schedule = geometric_beta_schedule() if args.beta_warmup else None
        cfg = PadmmConfig(beta=args.beta, beta_schedule=schedule,
                          sigma_bar=args.sigma, xi0=args.xi0, tol=args.tol,
                          max_iters=args.max_iters, theta_fixed=theta)
        problem = inst.problem
        ref = inst.z_star if kind == "qp" else None
        result = run_padmm(problem, cfg, ref_solution=ref)
        final_extra = {"pkkt": result.final_pkkt}
        config_echo = {"algorithm": args.algorithm, "problem": args.problem,
                       "sigma": args.sigma, "theta": args.theta,
                       "beta": args.beta, "beta_warmup": args.beta_warmup,
                       "xi0": args.xi0, "tol": args.tol,
                       "max_iters": args.max_iters}
    else:
        if kind != "qp":
            raise ConfigError("algorithm %s only supports qp problems"
                              % args.algorithm)
        result, cfg, final_extra = _run_splitter(args, inst, theta)
        config_echo = {"algorithm": args.algorithm, "problem": args.problem,
                       "sigma": args.sigma, "theta": args.theta,
                       "xi0": args.xi0, "tol": args.tol,
                       "max_iters": args.max_iters}
    if args.trace:
        result.trace.to_csv(args.trace)
    if args.summary:
        recs = result.trace.records
        ks = np.array([r.k for r in recs], dtype=float)
        slopes = {"pointwise": hpe_core.loglog_slope(
            ks, np.array([r.v_norm for r in recs]))}
        certs = [r.cert for r in recs if r.cert is not None]
        if certs:
            v_bars, _ = hpe_core.ergodic_series(certs, np.ones(len(certs)))
            slopes["ergodic"] = hpe_core.loglog_slope(ks[:len(v_bars)], v_bars)
        else:
            slopes["ergodic"] = None
        hpe_core.write_summary(args.summary, result, config_echo,
                               slopes=slopes, final_extra=final_extra)
    final = result.trace.records[-1] if len(result.trace) else None
    print("%s on %s: %s after %d iterations (final v_norm %s)"
          % (args.algorithm, args.problem,
             "converged" if result.converged else result.reason,
             result.iterations,
             ("%.3e" % final.v_norm) if final else "n/a"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def cmd_bench(args) -> int:
    params = parse_descriptor(args.problem)
    kind, inst = build_problem(params)
    algos = [a.strip() for a in args.algorithms.split(",")] if args.algorithms \
        else list(ALGORITHMS)
    for a in algos:
        if a not in ALGORITHMS:
            raise ConfigError("unknown algorithm %r" % a)
    if kind == "lrr":
        algos = [a for a in algos if a == "padmm-ebb"]
        if not algos:
            raise ConfigError("lrr problems are only supported by padmm-ebb")
    print("%-12s %9s %10s %12s %9s" % ("algorithm", "iters", "converged",
                                       "residual", "time_s"))
    for a in algos:
        ns = argparse.Namespace(**vars(args))
        ns.algorithm = a
        ns.theta = "auto"
        t0 = time.perf_counter()
        if a == "padmm-ebb":
            schedule = geometric_beta_schedule() if args.beta_warmup else None
            cfg = PadmmConfig(beta=args.beta, beta_schedule=schedule,
                              sigma_bar=args.sigma, xi0=args.xi0, tol=args.tol,
                              max_iters=args.max_iters,
                              record_certificates=False)
            result = run_padmm(inst.problem, cfg)
            residual = result.final_pkkt
        else:
            result, _, _ = _run_splitter(ns, inst, None)
            recs = result.trace.records
            residual = recs[-1].v_norm if recs else float("nan")
        print("%-12s %9d %10s %12.3e %9.2f"
              % (a, result.iterations, result.converged, residual,
                 time.perf_counter() - t0))
    return EXIT_OK


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------


def cmd_oracle(args) -> int:
    params = parse_descriptor(args.problem)
    kind, inst = build_problem(params)
    if kind != "qp":
        raise ConfigError("no closed-form reference oracle for %s problems"
                          % kind)
    x = np.concatenate(inst.x_star)
    res = inst.kkt_residual(x, inst.y_star)
    np.set_printoptions(precision=10, suppress=False)
    print("x* =", x)
    print("y* =", inst.y_star)
    print("kkt_residual = %.3e" % res)
    return EXIT_OK if res <= 1e-10 else EXIT_SOLVER


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------


def cmd_check(args) -> int:
    results = acceptance.run_all(verbose=True)
    failed = [r for r in results if not r.passed]
    print("%d/%d acceptance criteria passed"
          % (len(results) - len(failed), len(results)))
    return EXIT_OK if not failed else EXIT_SOLVER


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opsplit",
        description="Certified operator-splitting and multi-block ADMM solvers")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--problem", required=True,
                       help="descriptor, e.g. qp:seed=1,p=2,n=5,m=3 or "
                            "lrr:seed=0,d=40,n=40 or lrr:manifest=DIR")
        p.add_argument("--sigma", type=float, default=0.5,
                       help="relative-error parameter in [0, 1)")
        p.add_argument("--xi0", type=float, default=0.01,
                       help="leading coefficient of the summable xi schedule")
        p.add_argument("--tol", type=float, default=1e-8)
        p.add_argument("--max-iters", type=int, default=1000)
        p.add_argument("--beta", type=float, default=1.0,
                       help="penalty parameter (padmm-ebb)")
        p.add_argument("--beta-warmup", action="store_true",
                       help="use the bounded geometric penalty warm-up")
        p.add_argument("--cv-r", type=float, default=None,
                       help="primal scale r of the condat-vu metric")
        p.add_argument("--cv-s", type=float, default=None,
                       help="dual scale s of the condat-vu metric")

    ps = sub.add_parser("solve", help="run one algorithm on one problem")
    ps.add_argument("--algorithm", required=True, choices=ALGORITHMS)
    add_common(ps)
    ps.add_argument("--theta", default="auto",
                    help="over-relaxation: a number or 'auto'")
    ps.add_argument("--trace", default=None, help="write per-iteration CSV")
    ps.add_argument("--summary", default=None, help="write JSON run summary")
    ps.set_defaults(func=cmd_solve)

    pb = sub.add_parser("bench", help="compare algorithms on one problem")
    add_common(pb)
    pb.add_argument("--algorithms", default=None,
                    help="comma-separated subset (default: all compatible)")
    pb.set_defaults(func=cmd_bench)

    po = sub.add_parser("oracle", help="print the reference solution")
    po.add_argument("--problem", required=True)
    po.set_defaults(func=cmd_oracle)

    pc = sub.add_parser("check", help="run the acceptance suite")
    pc.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except (CriterionViolation, MetricScheduleViolation, RuntimeError) as exc:
        print("solver abort: %s" % exc, file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
