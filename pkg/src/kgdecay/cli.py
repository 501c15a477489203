"""Command-line front end: parse a config, run the pipeline stages, emit files.

Stages (dependency order): threshold -> contraction -> epsilon -> decay.
Outputs under the chosen directory: certificate.json (stable key order),
threshold_trace.csv, monodromy_scan.csv, decay.csv and summary.txt.  Runs are
deterministic: identical config and seed produce byte-identical certificates.

Exit codes: 0 all requested verdicts pass; 2 config error; 3 model-assumption
violation; 4 certificate failure; 5 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import certify, highfreq, monodromy, perturbation
from .coefficients import ConstantMass, ModelSpec, PerturbedMass, PeriodicCoefficient
from .errors import (
    ConfigError,
    IntegrationFailureError,
    InvalidCoefficientError,
    KgDecayError,
    ModelAssumptionError,
    NoContractionError,
    ThresholdSearchError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_CERTIFICATE = 4
EXIT_NUMERICAL = 5

STAGES = ("threshold", "contraction", "epsilon", "decay")
STAGE_DEPS = {
    "threshold": (),
    "contraction": ("threshold",),
    "epsilon": ("threshold", "contraction"),
    "decay": ("contraction",),
}

DEFAULT_GRIDS = {
    "threshold_xi_points": 128,
    "threshold_t_points": 64,
    "verify_t_points": 64,
    "verify_xi_points": 128,
    "contraction_t_points": 64,
    "contraction_xi_points": 256,
    "contraction_k_max": 64,
    "decay_periods": 40,
    "decay_xi_low_points": 256,
    "decay_xi_high_points": 64,
}

DEFAULT_TOLERANCES = {
    "propagate_tol": 1e-10,
    "contraction_margin": 1e-3,
}


@dataclass
class RunConfig:
    """Validated run configuration."""

    spec: ModelSpec
    stages: tuple
    grids: dict
    tolerances: dict
    out_dir: Path
    seed: int = 0
    workers: int = 1


def parse_coefficient(text: str, T: float) -> PeriodicCoefficient:
    """Parse 'name key=value ...' into a coefficient of period T.

    Known names: constant, sin_offset, triangle, square, custom_csv.
    custom_csv takes path=<file> and optional order=<0|1>; the CSV period must
    match T.
    """
    parts = text.split()
    if not parts:
        raise ConfigError("empty coefficient declaration")
    name, kvs = parts[0], parts[1:]
    params = {}
    for kv in kvs:
        if "=" not in kv:
            raise ConfigError(f"coefficient parameter {kv!r} is not key=value")
        key, val = kv.split("=", 1)
        params[key] = val
    try:
        if name == "custom_csv":
            path = params.pop("path", None)
            if path is None:
                raise ConfigError("custom_csv requires path=<file>")
            order = int(params.pop("order", 1))
            if params:
                raise ConfigError(f"unknown custom_csv parameters: {sorted(params)}")
            coeff = PeriodicCoefficient.from_csv(path, order=order)
            if abs(coeff.period - T) > 1e-9 * T:
                raise ModelAssumptionError(
                    f"CSV period {coeff.period:g} does not match model T = {T:g}"
                )
            return coeff
        return PeriodicCoefficient.from_closed_form(
            name, T, **{k: float(v) for k, v in params.items()}
        )
    except InvalidCoefficientError as exc:
        raise ConfigError(str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(f"bad coefficient declaration {text!r}: {exc}") from exc


def load_config(path, out_override=None, seed_override=None, workers_override=None, stage_override=None) -> RunConfig:
    """Read and validate an INI-style run configuration."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    if "model" not in cp:
        raise ConfigError("config is missing the [model] section")
    model = cp["model"]
    try:
        T = float(model.get("T", "1.0"))
        m0 = float(model.get("m0", "0.0"))
        epsilon = float(model.get("epsilon", "0.0"))
    except ValueError as exc:
        raise ConfigError(f"bad numeric value in [model]: {exc}") from exc
    if "b" not in model:
        raise ConfigError("[model] must declare the dissipation b")
    b = parse_coefficient(model["b"], T)
    if epsilon > 0.0:
        if "m1" not in model:
            raise ConfigError("epsilon > 0 requires an m1 declaration")
        m1 = parse_coefficient(model["m1"], T)
        mass = PerturbedMass(m0, epsilon, m1)
    else:
        mass = ConstantMass(m0)
    spec = ModelSpec(b, mass, T)

    run_sec = cp["run"] if "run" in cp else {}
    stages = stage_override or tuple((run_sec.get("stages", "") or " ".join(STAGES)).split())
    for st in stages:
        if st not in STAGES:
            raise ConfigError(f"unknown stage {st!r}; known: {STAGES}")
        for dep in STAGE_DEPS[st]:
            if dep not in stages:
                raise ConfigError(f"stage {st!r} requires stage {dep!r}")
    stages = tuple(st for st in STAGES if st in stages)
    if not stages:
        raise ConfigError("no stages requested")

    grids = dict(DEFAULT_GRIDS)
    if "grids" in cp:
        for key, val in cp["grids"].items():
            if key not in grids:
                raise ConfigError(f"unknown grid override {key!r}")
            grids[key] = int(val)
    tolerances = dict(DEFAULT_TOLERANCES)
    if "tolerances" in cp:
        for key, val in cp["tolerances"].items():
            if key not in tolerances:
                raise ConfigError(f"unknown tolerance override {key!r}")
            tolerances[key] = float(val)

    out_dir = Path(out_override or run_sec.get("out", "kgdecay_out"))
    seed = int(seed_override if seed_override is not None else run_sec.get("seed", 0))
    workers = int(workers_override if workers_override is not None else run_sec.get("workers", 1))
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    return RunConfig(
        spec=spec,
        stages=stages,
        grids=grids,
        tolerances=tolerances,
        out_dir=out_dir,
        seed=seed,
        workers=workers,
    )


def _flatten(prefix, obj, out):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, out)
    else:
        out.append((prefix, obj))


def write_summary(path, cert: dict) -> None:
    """Human-readable summary; every number is a field of the certificate."""
    lines = ["kgdecay run summary", "=" * 19]
    flat = []
    _flatten("", cert, flat)
    for key, val in flat:
        if isinstance(val, float):
            lines.append(f"{key} = {val!r}")
        else:
            lines.append(f"{key} = {val}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def run(config: RunConfig) -> int:
    """Execute the requested stages and write all artifacts."""
    spec = config.spec
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    tol = float(config.tolerances["propagate_tol"])
    margin = float(config.tolerances["contraction_margin"])
    g = config.grids
    perturbed = spec.epsilon > 0.0

    cert_doc = {
        "schema_version": 1,
        "seed": config.seed,
        "stages": list(config.stages),
        "model": spec.describe(),
        "grids": dict(sorted(g.items())),
        "tolerances": dict(sorted(config.tolerances.items())),
        "unchecked_assumptions": [
            "essential boundedness of b' is assumed, not verified from samples"
        ],
    }
    verdicts = {}
    exit_code = EXIT_OK

    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    map_fn = pool.map if pool else map
    try:
        thr = None
        cert = None
        if "threshold" in config.stages:
            thr = highfreq.find_threshold_N(
                spec,
                xi_points=g["threshold_xi_points"],
                t_points=g["threshold_t_points"],
                map_fn=map_fn,
            )
            highfreq.threshold_trace_to_csv(out / "threshold_trace.csv", thr)
            base = spec.constant_mass_version()
            mx, bnd, ok = highfreq.verify_highfreq_contraction(
                base, thr.N, g["verify_t_points"], g["verify_xi_points"], tol=tol, map_fn=map_fn
            )
            doc = {
                "N": thr.N,
                "sup_value": thr.sup_value,
                "target": thr.target,
                "xi_max_checked": thr.xi_max_checked,
                "monodromy_norm_max": mx,
                "monodromy_norm_bound": bnd,
                "verified": ok,
            }
            if perturbed:
                mx_p, _, ok_p = highfreq.verify_highfreq_contraction(
                    spec, thr.N, g["verify_t_points"], g["verify_xi_points"], tol=tol, map_fn=map_fn
                )
                doc["monodromy_norm_max_perturbed"] = mx_p
                doc["verified_perturbed"] = ok_p
                ok = ok and ok_p
            cert_doc["threshold"] = doc
            verdicts["threshold"] = "Pass" if ok else "Fail"

        if "contraction" in config.stages:
            base = spec.constant_mass_version()
            t_grid = np.linspace(0.0, spec.T, g["contraction_t_points"])
            xi_grid = np.linspace(0.0, thr.N, g["contraction_xi_points"])
            M = monodromy.monodromy_grid(base, t_grid, xi_grid, tol, map_fn)
            samples = monodromy.samples_from_grid(t_grid, xi_grid, M)
            monodromy.scan_to_csv(out / "monodromy_scan.csv", samples)
            rho_max = max(s.spectral_radius for s in samples)
            k, c1 = monodromy.contraction_search(
                M, g["contraction_k_max"], margin, t_grid, xi_grid
            )
            cert = monodromy.assemble_certificate(
                base,
                thr.N,
                k,
                c1,
                grids={
                    "contraction_t_points": g["contraction_t_points"],
                    "contraction_xi_points": g["contraction_xi_points"],
                    "threshold_xi_points": g["threshold_xi_points"],
                    "threshold_t_points": g["threshold_t_points"],
                },
                tolerances={"propagate_tol": tol, "contraction_margin": margin},
            )
            cert_doc["contraction"] = {**cert.as_dict(), "rho_max": rho_max}
            verdicts["contraction"] = "Pass"

        if "epsilon" in config.stages:
            eb = perturbation.epsilon_bound(cert, spec.m0)
            doc = eb.as_dict()
            ok = eb.audit_pass
            if perturbed:
                ok_pc, worst = perturbation.verify_perturbed_contraction(spec, cert, tol, map_fn)
                doc["model_epsilon"] = spec.epsilon
                doc["model_within_bound"] = spec.epsilon <= eb.epsilon_max
                doc["perturbed_contraction_ok"] = ok_pc
                doc["perturbed_contraction_worst"] = worst
                ok = ok and ok_pc
            cert_doc["epsilon"] = doc
            verdicts["epsilon"] = "Pass" if ok else "Fail"

        if "decay" in config.stages:
            if perturbed:
                cert_eff = perturbation.perturbed_certificate(spec, cert, tol, map_fn)
            else:
                cert_eff = cert
            report = certify.sup_norm_curve(
                spec,
                cert_eff,
                t_end=g["decay_periods"] * spec.T,
                nxi_low=g["decay_xi_low_points"],
                nxi_high=g["decay_xi_high_points"],
                tol=tol,
                with_gamma=spec.b_strictly_positive,
                map_fn=map_fn,
            )
            certify.decay_to_csv(out / "decay.csv", report)
            constants = certify.decay_constants(report, cert_eff, perturbed=perturbed)
            cert_doc["decay"] = {
                **report.summary_dict(),
                "certificate_used": cert_eff.as_dict(),
                "constants": constants,
            }
            verdicts["decay"] = report.verdict

    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelAssumptionError as exc:
        print(f"model assumption violated: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (ThresholdSearchError, NoContractionError, ValueError) as exc:
        print(f"certificate failure: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATE
    except IntegrationFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    finally:
        if pool:
            pool.shutdown()

    cert_doc["verdicts"] = verdicts
    all_pass = all(v == "Pass" for v in verdicts.values())
    cert_doc["all_pass"] = all_pass
    (out / "certificate.json").write_text(
        json.dumps(cert_doc, indent=2) + "\n", encoding="utf-8"
    )
    write_summary(out / "summary.txt", cert_doc)
    if not all_pass:
        return EXIT_CERTIFICATE
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kgdecay",
        description="Decay certificates for damped wave models with periodic coefficients",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run pipeline stages from a config file")
    p_run.add_argument("--config", required=True, help="path to the INI config")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--workers", type=int, default=None, help="worker threads for grid scans")
    p_run.add_argument("--seed", type=int, default=None, help="seed recorded in the certificate")
    p_run.add_argument(
        "--stage", action="append", default=None, help="stage to run (repeatable; default: config)"
    )

    p_w = sub.add_parser("w", help="evaluate the principal Lambert W function")
    p_w.add_argument("x", type=float)

    args = parser.parse_args(argv)
    if args.command == "w":
        try:
            print(f"{perturbation.lambert_w0(args.x):.12f}")
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK

    try:
        config = load_config(
            args.config,
            out_override=args.out,
            seed_override=args.seed,
            workers_override=args.workers,
            stage_override=tuple(args.stage) if args.stage else None,
        )
    except (ConfigError, InvalidCoefficientError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelAssumptionError as exc:
        print(f"model assumption violated: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except KgDecayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
