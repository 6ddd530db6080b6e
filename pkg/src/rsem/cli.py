"""Command-line front end.

``rsem certify|simulate|study --config run.yaml [--seed N] [--out DIR]
[--tolerance-profile {strict,default}]``

Exit codes: 0 success or certified, 1 input error, 2 nothing certified,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import config as rconfig
from .dirichlet import DirichletProblem, reversible_report
from .em import BUILTINS, LinearRegimeModel, SimulationConfig, simulate
from .exceptions import ConfigError, NonFiniteState, NotReversible, RSEMError
from .generator import is_reversible, stationary_distribution, validate_generator
from .measure import StudyBudget, convergence_study
from .partition import build_partition, finite_spec, lumped_generator, partition_certificate
from .spectral import RegimeBounds, certificate_report

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CERTIFIED = 2
EXIT_DIVERGED = 3


def format_float(v: float) -> str:
    if math.isnan(v):
        return '"nan"'
    if math.isinf(v):
        return '"inf"' if v > 0 else '"-inf"'
    return format(v, ".16e")


def dumps(obj, indent: int = 0) -> str:
    """Deterministic JSON with every float in ``.16e`` notation."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, str):
        import json

        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + dumps(v, indent + 1) for v in obj) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _tolerances(profile):
    return rconfig.TOLERANCE_PROFILES[profile]


def build_model(cfg: rconfig.RunConfig, profile: str = "default"):
    """Model and validated generator described by ``cfg``."""
    tol = _tolerances(profile)
    sec = cfg.model
    bounds = None
    if sec.bounds is not None:
        try:
            bounds = RegimeBounds(**sec.bounds)
        except ValueError as exc:
            raise ConfigError("model.bounds", str(exc)) from exc
    builtin_gen = None
    if sec.builtin is not None:
        params = {k: tuple(v) if isinstance(v, list) else v for k, v in sec.params.items()}
        try:
            built = BUILTINS[sec.builtin](**params)
        except TypeError as exc:
            raise ConfigError("model.params", str(exc)) from exc
        except ValueError as exc:
            raise ConfigError("model.params", str(exc)) from exc
        model, builtin_gen = built.model, built.generator
        if bounds is not None:
            model.bounds = bounds
    else:
        try:
            model = LinearRegimeModel(sec.drift, sec.diffusion, sec.noise, bounds)
        except ValueError as exc:
            raise ConfigError("model.diffusion", str(exc)) from exc

    if cfg.generator.from_model:
        Q = builtin_gen
    else:
        try:
            Q = validate_generator(cfg.generator.rates, tol["row_sum"])
        except ValueError as exc:
            raise ConfigError("generator.rates", str(exc)) from exc
    if Q.n != model.n_regimes:
        raise ConfigError("generator.rates", f"{Q.n} states but the model has {model.n_regimes} regimes")
    if len(model.bounds.beta) != Q.n:
        raise ConfigError("model.bounds.beta", f"needs {Q.n} entries")
    return model, Q


def _resolve_seed(cfg: rconfig.RunConfig, override):
    if override is not None:
        return int(override), False
    if cfg.simulation.seed is not None:
        return cfg.simulation.seed, False
    return int(np.random.SeedSequence().entropy % (1 << 63)), True


def cmd_certify(cfg: rconfig.RunConfig, out_dir: str, profile: str = "default", seed=None) -> int:
    """Compute the requested certificates and write ``certificate.json``."""
    tol = _tolerances(profile)
    model, Q = build_model(cfg, profile)
    bounds = model.bounds
    wanted = set(cfg.analysis.certificates)
    mu = stationary_distribution(Q)
    reversible = is_reversible(Q, mu, tol["detailed_balance"])

    doc = {
        "command": "certify",
        "model": {"name": model.name, "noise": model.noise, "dim": model.dim, "bounds": bounds.to_dict()},
        "generator": Q.tolist(),
        "q0": Q.q0,
        "stationary_distribution": mu,
        "reversible": reversible,
        "tolerance_profile": profile,
        "seed": seed,
    }
    # the additive-noise bound only covers state-independent diffusion
    additive = "additive" in wanted and model.noise == "additive"
    spectral = certificate_report(Q, bounds, additive=additive, multiplicative="multiplicative" in wanted)
    doc["spectral"] = spectral
    if additive:
        # same certificate with the growth rates halved, for comparison
        doc["spectral_halved_beta"] = certificate_report(Q, bounds.scaled(0.5), additive=True, multiplicative=False)

    delta_max = {"additive": spectral["delta_max_additive"], "multiplicative": spectral["delta_max_multiplicative"]}
    if "reversible" in wanted:
        if reversible:
            prob = DirichletProblem.build(Q, bounds.beta, tol["detailed_balance"])
            rev = reversible_report(prob, bounds)
            delta_max["reversible"] = rev["delta_max"]
        else:
            rev = {"kind": "reversible", "status": "chain is not reversible"}
        doc["reversible_certificate"] = rev
    if "partition" in wanted:
        if cfg.analysis.partition_cuts is None:
            doc["partition"] = {"kind": "partition", "status": "skipped: no cut points given"}
        else:
            spec = finite_spec(Q, bounds.beta)
            try:
                part = build_partition(spec, cfg.analysis.partition_cuts)
            except ValueError as exc:
                raise ConfigError("analysis.partition_cuts", str(exc)) from exc
            QF, betaF = lumped_generator(spec, part)
            doc["partition"] = partition_certificate(QF, betaF).to_dict()

    certified = any(v is not None and v > 0 for v in delta_max.values())
    doc["delta_max"] = delta_max
    doc["certified"] = certified
    _write(os.path.join(out_dir, "certificate.json"), dumps(doc) + "\n")

    print(f"averaging sum: {format_float(spectral['averaging_sum'])} ({'holds' if spectral['averaging_holds'] else 'fails'})")
    for k, v in delta_max.items():
        print(f"delta_max[{k}]: {'not certified' if v is None else format_float(v)}")
    if "partition" in doc and "is_M" in doc["partition"]:
        print(f"M-matrix verdict: {doc['partition']['is_M']}")
    print("certified" if certified else "not certified")
    return EXIT_OK if certified else EXIT_NOT_CERTIFIED


def cmd_simulate(cfg: rconfig.RunConfig, out_dir: str, profile: str = "default", seed=None) -> int:
    """Write ``trajectory.csv``; a blow-up writes ``divergence.json`` instead."""
    model, Q = build_model(cfg, profile)
    s = cfg.simulation
    if len(s.x0) != model.dim:
        raise ConfigError("simulation.x0", f"needs {model.dim} entries")
    if s.i0 >= Q.n:
        raise ConfigError("simulation.i0", f"must be below {Q.n}")
    run = SimulationConfig(s.delta, s.steps, s.x0, s.i0, seed, s.stride)
    try:
        traj = simulate(model, Q, run)
    except NonFiniteState as exc:
        report = {
            "command": "simulate",
            "status": "diverged",
            "step": exc.step,
            "time": exc.step * s.delta,
            "delta": s.delta,
            "steps": s.steps,
            "seed": seed,
            "model": model.name,
        }
        _write(os.path.join(out_dir, "divergence.json"), dumps(report) + "\n")
        print(f"diverged at step {exc.step}", file=sys.stderr)
        return EXIT_DIVERGED
    with open(os.path.join(out_dir, "trajectory.csv"), "w", encoding="utf-8", newline="\n") as fh:
        traj.write_csv(fh)
    print(f"wrote {len(traj.times)} rows")
    return EXIT_OK


def cmd_study(cfg: rconfig.RunConfig, out_dir: str, profile: str = "default", seed=None) -> int:
    """Write ``study.csv`` and ``study_summary.json``."""
    if cfg.study is None:
        raise ConfigError("study", "required section is missing")
    model, Q = build_model(cfg, profile)
    st, s = cfg.study, cfg.simulation
    if len(s.x0) != model.dim:
        raise ConfigError("simulation.x0", f"needs {model.dim} entries")
    budget = StudyBudget(st.n_samples, st.sample_spacing, st.burn_in_time, st.n_chains, st.max_block, st.n_boot)
    res = convergence_study(model, Q, st.deltas, st.reference_delta, st.p, budget, seed=seed, x0=s.x0, i0=s.i0)
    with open(os.path.join(out_dir, "study.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("delta,W_hat,n_samples,seed\n")
        for d, w, n, sd in res.rows():
            fh.write(f"{d:.16e},{w:.16e},{n},{sd}\n")
    summary = {"command": "study", "model": model.name, **res.summary()}
    _write(os.path.join(out_dir, "study_summary.json"), dumps(summary) + "\n")
    verdict = "in band" if res.rate_in_band else ("rate unresolvable" if res.unresolvable else "outside band")
    print(f"slope {res.slope:.4f}, 95% CI [{res.slope_ci[0]:.4f}, {res.slope_ci[1]:.4f}], {verdict}")
    return EXIT_OK


COMMANDS = {"certify": cmd_certify, "simulate": cmd_simulate, "study": cmd_study}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="YAML run configuration")
    common.add_argument("--seed", type=int, default=None, help="overrides simulation.seed")
    common.add_argument("--out", default=None, metavar="DIR", help="output directory (default: output.dir)")
    common.add_argument("--tolerance-profile", choices=sorted(rconfig.TOLERANCE_PROFILES), default="default")
    parser = argparse.ArgumentParser(prog="rsem", description="Euler-Maruyama certificates and experiments for regime-switching SDEs")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("certify", parents=[common], help="stepsize certificates")
    sub.add_parser("simulate", parents=[common], help="one EM trajectory to CSV")
    sub.add_parser("study", parents=[common], help="stepsize convergence study")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        cfg = rconfig.load(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be nonnegative", file=sys.stderr)
        return EXIT_INPUT

    out_dir = args.out if args.out is not None else cfg.output.dir
    seed = args.seed if args.seed is not None else cfg.simulation.seed
    if args.command != "certify":
        seed, generated = _resolve_seed(cfg, args.seed)
        if generated:
            print(f"seed: {seed}")
    try:
        os.makedirs(out_dir, exist_ok=True)
        return COMMANDS[args.command](cfg, out_dir, args.tolerance_profile, seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NotReversible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NonFiniteState as exc:
        print(f"error: non-finite state at step {exc.step}", file=sys.stderr)
        return EXIT_DIVERGED
    except RSEMError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT if isinstance(exc, ValueError) else EXIT_DIVERGED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
