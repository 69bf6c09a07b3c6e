"""Command-line front door: parse problem documents, dispatch, report.

Exit codes: 0 success, 2 validation error, 3 certificate failure (the
report is still emitted with its residuals).  Reports are deterministic;
wall time goes to stderr so repeated runs stay byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
import time

import numpy as np

from .dual import eigencurve_conditions, slackness_certificate, solve_dual
from .errors import CertificateError, ConvergenceError, SpecValidationError
from .plans import (
    FiniteMemoryPlan,
    entropy,
    equilibrium_plan,
    export_plan,
    gibbs_plan,
)
from .symbolic import load_problem
from .transfer import (
    MarkovMeasure,
    effective_cost,
    gibbs_measure,
    log_perron,
    normalize_cost,
)
from .report import render_report
from .zerotemp import (
    default_beta_grid,
    zero_temp_constrained,
    zero_temp_unconstrained,
)

VERBS = ("pressure", "gibbs", "entropy", "dual", "zerotemp", "certify")


def _plan_from_spec(spec):
    """Optional plan section: jacobian (x, a, b) flat, q and p over blocks."""
    doc = spec.extras.get("plan")
    if doc is None:
        return None
    d = spec.alphabet_size
    memory = max(spec.depth, 2)
    n_blocks = d ** (memory - 1)
    try:
        q = np.asarray(doc["q"], dtype=float).reshape(n_blocks, n_blocks)
        p = np.asarray(doc["p"], dtype=float).reshape(n_blocks)
        jac = np.asarray(doc["jacobian"], dtype=float).reshape(spec.num_x, d, n_blocks)
    except (KeyError, ValueError) as exc:
        raise SpecValidationError(f"invalid plan section: {exc}") from exc
    nu = MarkovMeasure(q, p, d)
    return FiniteMemoryPlan(jac, nu, memory)


def _grid(spec, args):
    if args.beta_max is not None:
        return default_beta_grid(args.beta_max)
    if spec.beta_grid is not None:
        return list(spec.beta_grid)
    return default_beta_grid()


def _run_pressure(spec, args):
    cost = effective_cost(spec.cost)
    log_lam, _, residual, iterations = log_perron(cost, tol=args.tol_eigen)
    return {
        "pressure": log_lam,
        "lambda": float(np.exp(log_lam)),
        "eigen_residual": residual,
        "iterations": iterations,
    }


def _run_gibbs(spec, args):
    cost = effective_cost(spec.cost)
    normalized = normalize_cost(cost, tol=args.tol_eigen)
    measure = gibbs_measure(normalized)
    plan = gibbs_plan(normalized)
    depth = args.depth if args.depth else cost.depth
    return {
        "pressure": normalized.log_lambda,
        "stationary": measure.p,
        "transition": measure.q,
        "plan": export_plan(plan, depth),
    }


def _run_entropy(spec, args):
    plan = _plan_from_spec(spec)
    if plan is not None:
        return {"entropy": entropy(plan), "source": "plan"}
    plan, value = equilibrium_plan(spec.cost)
    return {"entropy": entropy(plan), "source": "equilibrium", "pressure": value}


def _require_mu(spec, verb):
    if spec.mu is None:
        raise SpecValidationError(f"verb '{verb}' requires a mu field in the spec")
    return spec.mu


def _dual_report(solution):
    return {
        "phi_tilde": solution.phi_tilde,
        "value": solution.value,
        "pressure_residual": solution.pressure_residual,
        "marginal_residual": solution.marginal_residual,
        "duality_gap": solution.duality_gap,
        "iterations": solution.iterations,
    }


def _run_dual(spec, args):
    mu = _require_mu(spec, "dual")
    solution = solve_dual(spec.cost, mu, marginal_tol=args.tol_dual)
    return _dual_report(solution)


def _run_certify(spec, args):
    mu = _require_mu(spec, "certify")
    solution = solve_dual(spec.cost, mu, marginal_tol=args.tol_dual)
    certificate = slackness_certificate(spec.cost, solution.phi_tilde, mu)
    report = _dual_report(solution)
    report["certificate"] = certificate
    report["passed"] = bool(
        certificate["pressure_residual"] <= 1e-9
        and certificate["marginal_residual"] <= args.tol_dual
        and certificate["duality_gap"] <= 1e-7
    )
    if spec.num_x == 2 and spec.cost.depth <= 2:
        report["curve_conditions"] = eigencurve_conditions(
            spec.cost, solution.phi_tilde, mu
        )
    return report


def _sweep_rows(records):
    rows = []
    for rec in records:
        cells = [format(rec.beta, ".17g"),
                 format(rec.log_lambda_over_beta, ".17g"),
                 format(rec.gap_to_limit, ".17g")]
        if rec.phi_over_beta is not None:
            cells.extend(format(v, ".17g") for v in rec.phi_over_beta)
        rows.append(" ".join(cells))
    return rows


def _run_zerotemp(spec, args):
    betas = _grid(spec, args)
    if spec.mu is None:
        result = zero_temp_unconstrained(spec.cost, betas)
        return {
            "mode": "unconstrained",
            "m": result.m,
            "subaction": result.subaction,
            "optimal_cycle": list(result.optimal_cycle),
            "calibration_residual": result.calibration_residual,
            "feasibility_residual": result.feasibility_residual,
            "h_vs_subaction_distance": result.h_vs_subaction_distance,
            "monotone_gap": result.monotone_gap,
            "sweep": _sweep_rows(result.sweep),
        }
    result = zero_temp_constrained(spec.cost, spec.mu, betas)
    return {
        "mode": "constrained",
        "m_tilde": result.m_tilde,
        "v_tilde": result.v_tilde,
        "value": result.value,
        "support_plan": [[x, list(word), mass] for x, word, mass in result.support_plan],
        "certificate": {
            "feasibility_residual": result.feasibility_residual,
            "support_equality_residual": result.support_equality_residual,
            "slack_tolerance": result.slack_tolerance,
        },
        "sweep": _sweep_rows(result.records),
    }


_RUNNERS = {
    "pressure": _run_pressure,
    "gibbs": _run_gibbs,
    "entropy": _run_entropy,
    "dual": _run_dual,
    "zerotemp": _run_zerotemp,
    "certify": _run_certify,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ergotrans",
        description="Solvers for finite-memory costs on X x {1..d}^N: "
                    "pressure, Gibbs plans, entropy, constrained duality, "
                    "zero-temperature limits.",
    )
    parser.add_argument("verb", choices=VERBS)
    parser.add_argument("--spec", required=True, help="problem document (JSON)")
    parser.add_argument("--out", help="write the report here instead of stdout")
    parser.add_argument("--tol-eigen", type=float, default=1e-13, dest="tol_eigen")
    parser.add_argument("--tol-dual", type=float, default=1e-7, dest="tol_dual")
    parser.add_argument("--beta-max", type=float, default=None, dest="beta_max")
    parser.add_argument("--depth", type=int, default=None,
                        help="cylinder depth for plan exports")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    exit_code = 0
    try:
        spec, raw = load_problem(args.spec)
        digest = hashlib.sha256(raw).hexdigest()
        results = _RUNNERS[args.verb](spec, args)
    except OSError as exc:
        print(f"error: cannot read spec: {exc}", file=sys.stderr)
        return 2
    except SpecValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except CertificateError as exc:
        if exc.solution is None:
            print(f"certificate failure: {exc}", file=sys.stderr)
            return 3
        results = _dual_report(exc.solution)
        results["certificate_error"] = str(exc)
        exit_code = 3
    except ConvergenceError as exc:
        print(f"solver failure: {exc} (residual {exc.residual:.3e})", file=sys.stderr)
        return 3

    report = {
        "verb": args.verb,
        "spec_digest": digest,
        "tolerances": {
            "tol_eigen": args.tol_eigen,
            "tol_dual": args.tol_dual,
            "beta_max": args.beta_max if args.beta_max is not None else 0.0,
        },
        "results": results,
    }
    text = render_report(report)
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    elapsed_ms = (time.perf_counter() - started) * 1e3
    print(f"wall_time_ms={elapsed_ms:.3f}", file=sys.stderr)
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
