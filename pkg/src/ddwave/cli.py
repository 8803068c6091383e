"""Command-line front-end: ``ddwave {bcrlb,pareto,simulate,optimize} --config FILE``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, SweepCase, load_config
from .estimator import monte_carlo_nmse
from .exceptions import ConfigError, NumericalError
from .fisher import SensitivitySet, bcrlb, bim, efim, prior_information, sensitivity_set
from .noise_model import noise_covariance
from .optimizer import (
    Reference,
    chi_relative,
    check_weighting,
    optimize_spectrum,
    pareto_sweep,
    reference_rect,
    select_design,
    tradeoff_point,
    weighted_sensitivity,
)
from .signal_model import SystemConfig

log = logging.getLogger("ddwave")

PARETO_COLUMNS = ["rho_or_kappa", "alpha", "chi_tau_db", "chi_nu_db", "objective"]
SIMULATE_COLUMNS = ["snr_db", "system", "nmse_tau", "nmse_nu", "bcrlb_tau_norm", "bcrlb_nu_norm"]
BCRLB_COLUMNS = ["rho_or_kappa", "snr_db", "bcrlb_tau_s2", "bcrlb_nu_hz2", "bcrlb_tau_norm", "bcrlb_nu_norm"]

EPILOG = f"""\
outputs (written to --out, default: the config's `output`):
  bcrlb     bcrlb.csv     {", ".join(BCRLB_COLUMNS)}
  pareto    pareto.csv    {", ".join(PARETO_COLUMNS)}
            pareto_spectra.json  one record per row with the spectrum (re, im)
  simulate  simulate.csv  {", ".join(SIMULATE_COLUMNS)}
  optimize  spectrum.json (spectrum_<i>.json for several sweep values)
  every command also writes summary.json (resolved config, version, results)

exit codes: 0 success, 2 configuration error, 3 numerical failure
"""


@dataclass
class CaseContext:
    case: SweepCase
    sensitivity: SensitivitySet
    reference: Reference


def _system_record(config: SystemConfig) -> dict:
    return {
        "T0_s": config.T0,
        "fs_hz": config.fs,
        "B_hz": config.B,
        "N0_w_per_hz": config.N0,
        "P_w": config.P,
        "gamma_re": config.gamma.real,
        "gamma_im": config.gamma.imag,
        "N": config.N,
        "K": config.K,
    }


def system_from_record(record: dict) -> SystemConfig:
    return SystemConfig(
        T0=record["T0_s"],
        fs=record["fs_hz"],
        B=record["B_hz"],
        N0=record["N0_w_per_hz"],
        P=record["P_w"],
        gamma=complex(record["gamma_re"], record["gamma_im"]),
    )


def _spectrum_record(x) -> dict:
    x = np.asarray(x, dtype=complex)
    return {"re": [float(v) for v in x.real], "im": [float(v) for v in x.imag]}


def spectrum_from_record(record: dict) -> np.ndarray:
    if "spectrum" in record:
        record = record["spectrum"]
    try:
        return np.asarray(record["re"], dtype=float) + 1j * np.asarray(record["im"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"spectrum record needs equal-length 're' and 'im' lists: {exc}") from None


def load_spectrum(path: str | Path) -> np.ndarray:
    try:
        record = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read spectrum file {path}: {exc}") from None
    if isinstance(record, list):
        raise ConfigError(f"{path}: expected a single spectrum record, found a list")
    return spectrum_from_record(record)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, columns, rows) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def _context(exp: ExperimentConfig, case: SweepCase, threads: int) -> CaseContext:
    prior = exp.param_prior
    order = exp.quadrature.order
    sens = sensitivity_set(case.system, noise_covariance(case.system), prior, order, threads)
    ref_sens = sensitivity_set(case.reference, noise_covariance(case.reference), prior, order, threads)
    ref_x = reference_rect(case.reference, exp.spectrum.reference_shape)
    return CaseContext(case, sens, Reference(ref_sens, ref_x))


def _design(exp: ExperimentConfig, ctx: CaseContext, threads: int):
    """Spectrum for the configured source on the case's own system, plus metadata."""
    spec = exp.spectrum
    sens, ref = ctx.sensitivity, ctx.reference
    K = ctx.case.system.K
    if spec.source == "zero":
        return np.zeros(K, dtype=complex), {"source": "zero"}
    if spec.source == "file":
        x = load_spectrum(spec.path)
        if x.shape != (K,):
            raise ConfigError(f"{spec.path}: spectrum has {x.size} coefficients, system needs K = {K}")
        return x, {"source": "file", "path": spec.path}
    if spec.source == "reference":
        raise AssertionError("reference source is resolved on the reference system")
    if spec.weighting is not None:
        try:
            weighting = check_weighting(spec.weighting)
        except ValueError as exc:
            raise ConfigError(f"spectrum.weighting: {exc}") from None
        x = optimize_spectrum(sens, weighting, ctx.case.system.P)
        objective = float(np.real(x.conj() @ weighted_sensitivity(sens, weighting) @ x))
        return x, {"source": "optimized", "weighting": weighting.tolist(), "objective": objective}
    if spec.alpha is not None:
        point = tradeoff_point(sens, ref, spec.alpha)
        return point.spectrum, {"source": "optimized", "alpha": point.alpha, "objective": point.objective}
    points = pareto_sweep(sens, ref, exp.sweep.alpha_points, threads)
    point = select_design(points, spec.selection, sens, ref)
    return point.spectrum, {
        "source": "optimized",
        "selection": spec.selection,
        "alpha": point.alpha,
        "objective": point.objective,
    }


def _case_label(case: SweepCase):
    return "" if case.value is None else case.value


def _require_snr(exp: ExperimentConfig, command: str) -> list[float]:
    if exp.sweep.snr_db is None:
        raise ConfigError(f"sweep.snr_db: required by the {command} command")
    return list(exp.sweep.snr_db)


def cmd_bcrlb(exp: ExperimentConfig, out: Path, threads: int) -> dict:
    snrs = _require_snr(exp, "bcrlb")
    prior = exp.param_prior
    pim = prior_information(prior)
    sigma2 = np.array([prior.sigma_tau**2, prior.sigma_nu**2])
    rows, cases = [], []
    for case in exp.cases():
        ctx = _context(exp, case, threads)
        if exp.spectrum.source == "reference":
            sens, x, meta = ctx.reference.sensitivity, ctx.reference.spectrum, {"source": "reference"}
        else:
            sens = ctx.sensitivity
            x, meta = _design(exp, ctx, threads)
        for snr_db in snrs:
            N0 = sens.config.with_snr_db(snr_db).N0
            bound = bcrlb(bim(efim(sens.for_noise_level(N0), x), pim))
            rows.append(
                [
                    _case_label(case),
                    float(snr_db),
                    float(bound[0, 0]),
                    float(bound[1, 1]),
                    float(bound[0, 0] / sigma2[0]),
                    float(bound[1, 1] / sigma2[1]),
                ]
            )
        cases.append({"value": case.value, "system": _system_record(sens.config), **meta})
        log.info("bcrlb: case %s done", _case_label(case) or "-")
    _write_csv(out / "bcrlb.csv", BCRLB_COLUMNS, rows)
    return {"cases": cases}


def cmd_pareto(exp: ExperimentConfig, out: Path, threads: int) -> dict:
    rows, records, cases = [], [], []
    for case in exp.cases():
        ctx = _context(exp, case, threads)
        points = pareto_sweep(ctx.sensitivity, ctx.reference, exp.sweep.alpha_points, threads)
        for p in points:
            rows.append([_case_label(case), p.alpha, p.chi_tau, p.chi_nu, p.objective])
            records.append(
                {
                    "rho_or_kappa": case.value,
                    "alpha": p.alpha,
                    "chi_tau_db": p.chi_tau,
                    "chi_nu_db": p.chi_nu,
                    "objective": p.objective,
                    "system": _system_record(case.system),
                    "spectrum": _spectrum_record(p.spectrum),
                }
            )
        cases.append(
            {
                "value": case.value,
                "system": _system_record(case.system),
                "reference_system": _system_record(case.reference),
                "reference_spectrum": _spectrum_record(ctx.reference.spectrum),
                "points": len(points),
            }
        )
        log.info("pareto: case %s, %d frontier points", _case_label(case) or "-", len(points))
    _write_csv(out / "pareto.csv", PARETO_COLUMNS, rows)
    _write_json(out / "pareto_spectra.json", records)
    return {"cases": cases}


def cmd_optimize(exp: ExperimentConfig, out: Path, threads: int) -> dict:
    if exp.spectrum.source != "optimized":
        raise ConfigError("spectrum.source: the optimize command needs source 'optimized'")
    cases = exp.cases()
    written = []
    for index, case in enumerate(cases):
        ctx = _context(exp, case, threads)
        x, meta = _design(exp, ctx, threads)
        chi_tau, chi_nu = chi_relative(ctx.sensitivity, x, ctx.reference)
        j_d = efim(ctx.sensitivity, x)
        record = {
            "rho_or_kappa": case.value,
            "chi_tau_db": chi_tau,
            "chi_nu_db": chi_nu,
            "efim": j_d.tolist(),
            "bcrlb": bcrlb(bim(j_d, prior_information(exp.param_prior))).tolist(),
            "system": _system_record(case.system),
            "reference_system": _system_record(case.reference),
            "reference_spectrum": _spectrum_record(ctx.reference.spectrum),
            "spectrum": _spectrum_record(x),
            **meta,
        }
        name = "spectrum.json" if len(cases) == 1 else f"spectrum_{index}.json"
        _write_json(out / name, record)
        written.append({"file": name, "value": case.value, "chi_tau_db": chi_tau, "chi_nu_db": chi_nu, **meta})
    return {"cases": written}


def cmd_simulate(exp: ExperimentConfig, out: Path, threads: int) -> dict:
    snrs = _require_snr(exp, "simulate")
    cases = exp.cases()
    if len(cases) != 1:
        raise ConfigError("sweep.values: simulate runs a single system; give exactly one rho or kappa")
    if exp.spectrum.source == "reference":
        raise ConfigError("spectrum.source: simulate always runs the reference; choose the design source")
    ctx = _context(exp, cases[0], threads)
    x, meta = _design(exp, ctx, threads)
    prior, est = exp.param_prior, exp.estimator_config
    common = dict(snr_list=snrs, trials=exp.sweep.trials, seed=exp.seed, threads=threads)
    log.info("simulate: reference system, %d trials per SNR", exp.sweep.trials)
    ref_rows = monte_carlo_nmse(
        ctx.case.reference, prior, ctx.reference.spectrum, est, sensitivity=ctx.reference.sensitivity, **common
    )
    log.info("simulate: optimized system")
    opt_rows = monte_carlo_nmse(ctx.case.system, prior, x, est, sensitivity=ctx.sensitivity, **common)

    rows, detail = [], []
    for ref_row, opt_row in zip(ref_rows, opt_rows):
        for name, r in (("reference", ref_row), ("optimized", opt_row)):
            rows.append([r.snr_db, name, r.nmse_tau, r.nmse_nu, r.bcrlb_tau_norm, r.bcrlb_nu_norm])
            detail.append({"snr_db": r.snr_db, "system": name, "se_tau": r.se_tau, "se_nu": r.se_nu})
    _write_csv(out / "simulate.csv", SIMULATE_COLUMNS, rows)
    chi_tau, chi_nu = chi_relative(ctx.sensitivity, x, ctx.reference)
    return {
        "design": {"chi_tau_db": chi_tau, "chi_nu_db": chi_nu, "spectrum": _spectrum_record(x), **meta},
        "system": _system_record(ctx.case.system),
        "reference_system": _system_record(ctx.case.reference),
        "standard_errors": detail,
    }


COMMANDS = {"bcrlb": cmd_bcrlb, "pareto": cmd_pareto, "simulate": cmd_simulate, "optimize": cmd_optimize}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment YAML file")
    common.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory (overrides the config's output)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("--quiet", action="store_true", help="only log warnings and errors")

    parser = argparse.ArgumentParser(
        prog="ddwave",
        description="Waveform design and bounds for undersampled delay-Doppler estimation.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "bcrlb": "Bayesian CRLB diagonal versus SNR",
        "pareto": "sweep the delay/Doppler gain frontier",
        "simulate": "Monte-Carlo NMSE of the ML-MAP estimator, reference vs optimized",
        "optimize": "emit the design for one weighting",
    }
    for name, text in helps.items():
        sub.add_parser(
            name, parents=[common], help=text, epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter
        )
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        exp = load_config(args.config)
        updates = {}
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            updates["seed"] = args.seed
        if args.out is not None:
            updates["output"] = args.out
        exp = exp.model_copy(update=updates)
        out = Path(exp.output)
        out.mkdir(parents=True, exist_ok=True)
        results = COMMANDS[args.command](exp, out, args.threads)
        _write_json(
            out / "summary.json",
            {
                "command": args.command,
                "version": __version__,
                "config": exp.model_dump(mode="json"),
                "results": results,
            },
        )
    except ConfigError as exc:
        print(f"ddwave: configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"ddwave: numerical failure: {exc}", file=sys.stderr)
        return 3
    if not args.quiet:
        print(f"wrote {args.command} results to {out}", file=sys.stderr)
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
