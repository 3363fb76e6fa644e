"""Command-line front end.

Subcommands: certify, simulate, reference, match-check. Every command
reads a scenario config file, records a run manifest (config hash taken
over the raw bytes before parsing, seed, tool version, output paths),
and prints a flat key-value report. Exit codes: 0 pass/success, 2
checked failure (failed certificate, gate violation, divergence,
residual exceedance), 1 usage or runtime error.
"""

import argparse
import hashlib
import logging
import os
import sys

import numpy as np

from . import __version__
from .errors import (
    CertificationError,
    ConfigError,
    DesignError,
    FeasibilityError,
    MatchingError,
    ModelError,
    PhtrackError,
    SimulationError,
)
from .reference import reference_rows
from .scenarios import MATCHING_GATE, load_scenario
from .simulate import (
    convergence_fit,
    log_decay_fit,
    random_perturbation,
    simulate,
    write_csv,
)

log = logging.getLogger("phtrack")

_CHECKED_FAILURES = (CertificationError, DesignError, MatchingError,
                     FeasibilityError, ModelError, SimulationError)


class CliUsageError(Exception):
    """Bad command line; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliUsageError(message)


def _fmt(value):
    if isinstance(value, float) or isinstance(value, np.floating):
        return repr(float(value))
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _emit(report, sibling_of=None):
    text = "".join(f"{key} = {_fmt(value)}\n" for key, value in report.items())
    sys.stdout.write(text)
    if sibling_of is not None:
        with open(str(sibling_of) + ".manifest", "w", encoding="utf-8") as fh:
            fh.write(text)


def _config_sha256(path):
    try:
        with open(path, "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")


def _manifest(command, args, sha, bundle=None, outputs=()):
    report = {
        "command": command,
        "config": args.config,
        "config_sha256": sha,
        "version": __version__,
    }
    if bundle is not None:
        report["scenario"] = bundle.name
        report["kind"] = bundle.kind
        report["seed"] = bundle.seed
        report["dt"] = bundle.dt
    for i, path in enumerate(outputs):
        report[f"output{i + 1}"] = path
    return report


def _domain_rows(bundle):
    return {f"domain_{label}": f"{bundle.box.lo[i]!r}, {bundle.box.hi[i]!r}"
            for i, label in enumerate(bundle.box_labels)}


def cmd_certify(args):
    sha = _config_sha256(args.config)
    log.info("building scenario from %s", args.config)
    bundle = load_scenario(args.config, dt=args.dt, horizon=args.horizon,
                           seed=args.seed)
    cert = bundle.certificate
    report = _manifest("certify", args, sha, bundle)
    report["verdict"] = cert.verdict
    report["reason"] = cert.reason
    report["hurwitz_ok"] = cert.hurwitz_ok
    report["spectral_abscissa"] = cert.abscissa
    if cert.bounds is not None:
        report["alpha"] = cert.bounds.alpha
        report["beta"] = cert.bounds.beta
        report["hessian_samples"] = cert.bounds.sample_count
    else:
        report["alpha"] = "none"
        report["beta"] = "none"
    report["epsilon"] = cert.epsilon_found if cert.epsilon_found is not None else "none"
    report["n_spectrum_min_redistance"] = cert.n_spectrum_min_redistance
    for name, value in bundle.matching.items():
        report[f"matching_{name}"] = value
    report["feasibility_residual"] = bundle.feasibility
    report.update(_domain_rows(bundle))
    _emit(report, sibling_of=args.out)
    return 0 if cert.passed else 2


def cmd_simulate(args):
    sha = _config_sha256(args.config)
    build_horizon = args.horizon
    empty_run = args.horizon is not None and args.horizon <= 0.0
    if empty_run:
        build_horizon = None
    bundle = load_scenario(args.config, dt=args.dt, horizon=build_horizon,
                           seed=args.seed)
    horizon = 0.0 if empty_run else bundle.horizon
    log.info("simulating %s for %g s", bundle.name, horizon)
    trace = simulate(bundle.sys, bundle.design, bundle.ref, bundle.x0,
                     horizon, dt=bundle.dt, schedule=bundle.schedule,
                     certificate=bundle.certificate, unsafe=args.unsafe)
    outputs = []
    if args.out:
        write_csv(trace, args.out)
        outputs.append(args.out)
    report = _manifest("simulate", args, sha, bundle, outputs)
    report["horizon"] = horizon
    report["steps"] = max(trace.t.size - 1, 0)
    report["unsafe"] = args.unsafe
    if trace.t.size:
        report["terminal_err_q"] = trace.err_q[-1]
        report["terminal_err_full"] = trace.err_full[-1]
        final = trace.t >= trace.t[-1] - 1.0
        report["max_err_q_final_second"] = float(np.max(trace.err_q[final]))
        window = (0.1 * horizon, horizon)
        rate, r2 = log_decay_fit(trace.t, trace.err_full, window)
        report["decay_rate"] = rate
        report["decay_r2"] = r2
    if args.compare_out:
        delta = random_perturbation(2 * bundle.sys.n, args.perturbation,
                                    bundle.seed)
        trace_b = simulate(bundle.sys, bundle.design, bundle.ref,
                           bundle.x0 + delta, horizon, dt=bundle.dt,
                           schedule=bundle.schedule,
                           certificate=bundle.certificate, unsafe=args.unsafe)
        write_csv(trace_b, args.compare_out)
        report["output_compare"] = args.compare_out
        report["perturbation_norm"] = args.perturbation
        if trace.t.size:
            window = (max(0.1 * horizon, bundle.dt), horizon)
            rate, r2 = convergence_fit(trace, trace_b, window)
            report["pair_rate"] = rate
            report["pair_r2"] = r2
    _emit(report, sibling_of=args.out)
    return 0


def cmd_reference(args):
    sha = _config_sha256(args.config)
    bundle = load_scenario(args.config, dt=args.dt, horizon=args.horizon,
                           seed=args.seed)
    outputs = []
    if args.out:
        header, rows = reference_rows(bundle.ref, bundle.dt)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        outputs.append(args.out)
    report = _manifest("reference", args, sha, bundle, outputs)
    report["horizon"] = bundle.horizon
    report["feasibility_residual"] = bundle.feasibility
    _emit(report, sibling_of=args.out)
    return 0


def cmd_match_check(args):
    sha = _config_sha256(args.config)
    bundle = load_scenario(args.config, dt=args.dt, horizon=args.horizon,
                           seed=args.seed, enforce_gates=False)
    report = _manifest("match-check", args, sha, bundle)
    worst = 0.0
    for name, value in bundle.matching.items():
        report[f"matching_{name}"] = value
        worst = max(worst, value)
    report["matching_gate"] = MATCHING_GATE
    report["feasibility_residual"] = bundle.feasibility
    verdict = worst <= MATCHING_GATE
    report["verdict"] = "pass" if verdict else "fail"
    _emit(report, sibling_of=args.out)
    return 0 if verdict else 2


def build_parser():
    parser = _Parser(prog="phtrack",
                     description="Contraction-based trajectory tracking for "
                                 "port-Hamiltonian mechanical systems.")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = (
        ("certify", cmd_certify, "verify the contraction certificate of a design"),
        ("simulate", cmd_simulate, "integrate the closed loop and export the trace"),
        ("reference", cmd_reference, "export the reference trajectory"),
        ("match-check", cmd_match_check, "report matching-equation residuals"),
    )
    for name, fn, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="scenario config file (INI)")
        p.add_argument("--out", default=None, help="output CSV path")
        p.add_argument("--dt", type=float, default=None, help="override [sim] dt")
        p.add_argument("--horizon", type=float, default=None,
                       help="override [sim] horizon (seconds)")
        p.add_argument("--seed", type=int, default=None, help="override [sim] seed")
        p.add_argument("--unsafe", action="store_true",
                       help="run even when the certificate verdict is fail")
        if name == "simulate":
            p.add_argument("--compare-out", default=None,
                           help="also run from a perturbed x0 and export this trace")
            p.add_argument("--perturbation", type=float, default=0.1,
                           help="norm of the x0 perturbation for --compare-out")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None):
    level = os.environ.get("PHTRACK_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except CliUsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except _CHECKED_FAILURES as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 2
    except PhtrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime errors map to exit 1
        log.debug("unhandled error", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
