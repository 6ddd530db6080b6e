"""Run configuration: one YAML document drives every command.

Example::

    model:
      builtin: example_2_5
      params: {gamma: 1.0, sigma0: 1.0, sigma1: 1.0}
    generator:
      from_model: true
    analysis:
      certificates: [additive, multiplicative, reversible, partition]
      partition_cuts: [0.0]
    simulation: {delta: 0.01, steps: 1000, seed: 7, x0: [1.0], i0: 0}
    study: {deltas: [0.08, 0.04, 0.02], reference_delta: 0.005, p: 1.0}
    output: {dir: out}

An explicit linear model replaces ``builtin`` with ``noise``, ``drift`` (one
``n x n`` matrix per regime) and ``diffusion`` (``n x m`` per regime for
additive noise, ``m`` matrices of ``n x n`` per regime for multiplicative
noise). ``model.bounds`` optionally overrides the computed constants.
``generator.rates`` gives a dense row-major rate matrix; ``from_model: true``
takes the generator of a built-in example.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

import yaml

from .exceptions import ConfigError

CERTIFICATE_KINDS = ("additive", "multiplicative", "reversible", "partition")
TOLERANCE_PROFILES = {
    "default": {"row_sum": 1e-12, "detailed_balance": 1e-10},
    "strict": {"row_sum": 1e-14, "detailed_balance": 1e-12},
}


def _take(section: dict, key: str, path: str, kind, default=..., check=None):
    where = f"{path}.{key}" if path else key
    if key not in section or section[key] is None:
        if default is ...:
            raise ConfigError(where, "required field is missing")
        return default
    value = section[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and not isinstance(value, kind) or isinstance(value, bool) and kind in (int, float):
        raise ConfigError(where, f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
    if check is not None:
        msg = check(value)
        if msg:
            raise ConfigError(where, msg)
    return value


def _section(raw: dict, key: str, required: bool = False) -> dict:
    if key not in raw or raw[key] is None:
        if required:
            raise ConfigError(key, "required section is missing")
        return {}
    if not isinstance(raw[key], dict):
        raise ConfigError(key, "section must be a mapping")
    return raw[key]


def _float_list(value, path):
    if not isinstance(value, list):
        raise ConfigError(path, "expected a list")
    out = []
    for k, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}[{k}]", "expected a number")
        out.append(float(v))
    return out


def _matrix(value, path):
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a nested list")
    rows = [_float_list(r, f"{path}[{k}]") for k, r in enumerate(value)]
    return rows


def _nested(value, path):
    """Arbitrarily nested numeric lists, converted to floats."""
    if isinstance(value, list):
        return [_nested(v, f"{path}[{k}]") for k, v in enumerate(value)]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, "expected a number")
    return float(value)


def _open_unit(v):
    return None if 0 < v < 1 else "must lie in (0, 1)"


@dataclass
class ModelSection:
    builtin: str | None = None
    params: dict = field(default_factory=dict)
    noise: str | None = None
    drift: list | None = None
    diffusion: list | None = None
    bounds: dict | None = None


@dataclass
class GeneratorSection:
    rates: list | None = None
    from_model: bool = False


@dataclass
class AnalysisSection:
    certificates: list = field(default_factory=lambda: list(CERTIFICATE_KINDS))
    partition_cuts: list | None = None


@dataclass
class SimulationSection:
    delta: float = 0.01
    steps: int = 1000
    seed: int | None = None
    x0: list = field(default_factory=lambda: [1.0])
    i0: int = 0
    stride: int = 1
    burn_in: int | None = None
    thin: int = 10


@dataclass
class StudySection:
    deltas: list = field(default_factory=list)
    reference_delta: float = 0.005
    p: float = 1.0
    n_samples: int = 2000
    sample_spacing: float = 0.5
    burn_in_time: float = 20.0
    n_chains: int = 1
    n_boot: int = 50
    max_block: int = 2000


@dataclass
class OutputSection:
    dir: str = "out"


@dataclass
class RunConfig:
    model: ModelSection
    generator: GeneratorSection
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    study: StudySection | None = None
    output: OutputSection = field(default_factory=OutputSection)

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.study is None:
            out.pop("study")
        return out

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


def _parse_model(raw) -> ModelSection:
    sec = _section(raw, "model", required=True)
    builtin = _take(sec, "builtin", "model", str, None)
    params = _take(sec, "params", "model", dict, {})
    bounds = _take(sec, "bounds", "model", dict, None)
    if bounds is not None:
        bounds = {
            "beta": _float_list(_take(bounds, "beta", "model.bounds", list), "model.bounds.beta"),
            "c0": _take(bounds, "c0", "model.bounds", float, 0.0),
            "L": _take(bounds, "L", "model.bounds", float, 0.0),
            "L0": _take(bounds, "L0", "model.bounds", float, 0.0),
        }
    if builtin is not None:
        from .em import BUILTINS

        if builtin not in BUILTINS:
            raise ConfigError("model.builtin", f"unknown model {builtin!r}; choose from {sorted(BUILTINS)}")
        for k, v in params.items():
            params[k] = _nested(v, f"model.params.{k}")
        return ModelSection(builtin=builtin, params=params, bounds=bounds)
    noise = _take(sec, "noise", "model", str, check=lambda v: None if v in ("additive", "multiplicative") else "must be additive or multiplicative")
    drift = _nested(_take(sec, "drift", "model", list), "model.drift")
    diffusion = _nested(_take(sec, "diffusion", "model", list), "model.diffusion")
    return ModelSection(noise=noise, drift=drift, diffusion=diffusion, bounds=bounds)


def parse_config(raw: Any) -> RunConfig:
    """Validate a decoded document; errors name the offending field path."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    model = _parse_model(raw)

    gsec = _section(raw, "generator", required=True)
    from_model = _take(gsec, "from_model", "generator", bool, False)
    rates = None
    if not from_model:
        rates = _matrix(_take(gsec, "rates", "generator", list), "generator.rates")
    elif model.builtin is None:
        raise ConfigError("generator.from_model", "only valid with a built-in model")
    generator = GeneratorSection(rates=rates, from_model=from_model)

    asec = _section(raw, "analysis")
    certs = _take(asec, "certificates", "analysis", list, list(CERTIFICATE_KINDS))
    for k, c in enumerate(certs):
        if c not in CERTIFICATE_KINDS:
            raise ConfigError(f"analysis.certificates[{k}]", f"unknown certificate {c!r}")
    cuts = _take(asec, "partition_cuts", "analysis", list, None)
    analysis = AnalysisSection(list(certs), None if cuts is None else _float_list(cuts, "analysis.partition_cuts"))

    ssec = _section(raw, "simulation")
    d = SimulationSection()
    simulation = SimulationSection(
        delta=_take(ssec, "delta", "simulation", float, d.delta, _open_unit),
        steps=_take(ssec, "steps", "simulation", int, d.steps, lambda v: None if v >= 1 else "must be >= 1"),
        seed=_take(ssec, "seed", "simulation", int, None, lambda v: None if v >= 0 else "must be >= 0"),
        x0=_float_list(_take(ssec, "x0", "simulation", list, d.x0), "simulation.x0"),
        i0=_take(ssec, "i0", "simulation", int, d.i0, lambda v: None if v >= 0 else "must be >= 0"),
        stride=_take(ssec, "stride", "simulation", int, d.stride, lambda v: None if v >= 1 else "must be >= 1"),
        burn_in=_take(ssec, "burn_in", "simulation", int, None, lambda v: None if v >= 0 else "must be >= 0"),
        thin=_take(ssec, "thin", "simulation", int, d.thin, lambda v: None if v >= 1 else "must be >= 1"),
    )

    study = None
    if raw.get("study") is not None:
        tsec = _section(raw, "study")
        s = StudySection()
        deltas = _float_list(_take(tsec, "deltas", "study", list), "study.deltas")
        if not deltas:
            raise ConfigError("study.deltas", "must not be empty")
        for k, v in enumerate(deltas):
            msg = _open_unit(v)
            if msg:
                raise ConfigError(f"study.deltas[{k}]", msg)
        ref = _take(tsec, "reference_delta", "study", float, s.reference_delta, _open_unit)
        if not ref < min(deltas):
            raise ConfigError("study.reference_delta", "must be smaller than every entry of study.deltas")
        positive = lambda v: None if v > 0 else "must be positive"  # noqa: E731
        study = StudySection(
            deltas=deltas,
            reference_delta=ref,
            p=_take(tsec, "p", "study", float, s.p, lambda v: None if 0 < v <= 1 else "must lie in (0, 1]"),
            n_samples=_take(tsec, "n_samples", "study", int, s.n_samples, positive),
            sample_spacing=_take(tsec, "sample_spacing", "study", float, s.sample_spacing, positive),
            burn_in_time=_take(tsec, "burn_in_time", "study", float, s.burn_in_time, lambda v: None if v >= 0 else "must be >= 0"),
            n_chains=_take(tsec, "n_chains", "study", int, s.n_chains, positive),
            n_boot=_take(tsec, "n_boot", "study", int, s.n_boot, lambda v: None if v >= 2 else "must be >= 2"),
            max_block=_take(tsec, "max_block", "study", int, s.max_block, positive),
        )

    osec = _section(raw, "output")
    output = OutputSection(dir=_take(osec, "dir", "output", str, "out"))
    return RunConfig(model, generator, analysis, simulation, study, output)


def loads(text: str) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else "<document>"
        raise ConfigError(where, f"malformed YAML: {exc}") from exc
    return parse_config(raw)


def load(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
