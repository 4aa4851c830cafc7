"""Run configuration: INI file plus command-line overrides.

The accepted keys are listed in ``config_schema.ini`` next to this module.
Every value is the dimensionless ratio quoted for the model (``gamma = 1`` for
the Bose-Hubbard chains, ``J = 1`` for the modulated dimer).
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from .models import PRESETS, DDBHParams, FloquetDimerParams, ddbh_model, floquet_dimer_model, preset
from .propagator import IntegratorConfig

COMMANDS = ("spectrum", "oracle-ed", "floquet-map", "evolve", "bench", "fit-baseline")
SEED_STATES = ("random", "vacuum", "maximally-mixed")
DEFAULT_SEED = 1234


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def schema_text() -> str:
    return resources.files(__package__).joinpath("config_schema.ini").read_text()


def _schema() -> dict[str, dict[str, str]]:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(schema_text())
    return {s: dict(cp[s]) for s in cp.sections()}


def _cast(kind: str, raw: str, where: str):
    kind = kind.split(";")[0].strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "floats":
            return tuple(float(x) for x in raw.replace(",", " ").split())
        if kind == "floatpair":
            vals = tuple(float(x) for x in raw.replace(",", " ").split())
            if len(vals) != 2:
                raise ValueError(raw)
            return vals
        if kind == "str":
            return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot read {raw!r} as {kind}") from None
    raise ConfigError(f"schema error: unknown type {kind!r} for {where}")


@dataclass
class RunConfig:
    """Resolved settings for one command."""

    command: str
    preset: str | None = None
    size: int | None = None
    model_kind: str | None = None
    model_params: dict = field(default_factory=dict)
    T: float | None = None
    m: int = 5
    tol: float = 1e-3
    check_every: int = 10
    max_iter: int = 300
    seed: int = DEFAULT_SEED
    seed_state: str = "random"
    out: str = "out"
    threads: int = 1
    t_final: float = 15.0
    sample_dt: float = 0.05
    trajectory: str | None = None
    observable: str | None = None
    window: tuple | None = None
    max_dim: int = 256
    dump_eigenmatrices: bool = False
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; choose from {COMMANDS}")
        if self.command != "fit-baseline":
            if (self.preset is None) == (self.model_kind is None):
                raise ConfigError("give exactly one model source: a preset or a [model] section")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if self.model_kind is not None and self.model_kind not in ("ddbh", "floquet-dimer"):
            raise ConfigError(f"unknown model kind {self.model_kind!r}")
        if self.size is not None and self.size < 1:
            raise ConfigError("size must be >= 1")
        if self.T is not None and not self.T > 0:
            raise ConfigError("T must be positive")
        for name in ("m", "check_every", "max_iter", "threads", "max_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if not (self.t_final > 0 and self.sample_dt > 0):
            raise ConfigError("t_final and sample_dt must be positive")
        if self.seed_state not in SEED_STATES:
            raise ConfigError(f"seed_state must be one of {SEED_STATES}")
        if self.window is not None and not self.window[0] < self.window[1]:
            raise ConfigError("window must be (start, stop) with start < stop")
        if self.command == "fit-baseline" and self.trajectory is None:
            raise ConfigError("fit-baseline needs --trajectory (a CSV written by `evolve`)")
        return self

    def build_model(self):
        """Construct the model; raises :class:`ConfigError` on bad parameters."""
        try:
            if self.preset is not None:
                return preset(self.preset, self.size)
            if self.model_kind == "ddbh":
                return ddbh_model(DDBHParams(**self.model_params))
            return floquet_dimer_model(FloquetDimerParams(**self.model_params))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid model parameters: {exc}") from None

    def resolved_T(self, model) -> float:
        if self.T is not None:
            return self.T
        if model.is_periodic:
            return model.period
        default = PRESETS[self.preset].default_T if self.preset else None
        return default if default is not None else 0.05

    def to_dict(self) -> dict:
        d = asdict(self)
        d["integrator"] = asdict(self.integrator)
        if d["window"] is not None:
            d["window"] = list(d["window"])
        return d


_RUN_KEYS = {"command", "preset", "size", "T", "m", "tol", "check_every", "max_iter", "seed",
             "seed_state", "out", "threads", "t_final", "sample_dt", "trajectory", "observable",
             "window", "max_dim", "dump_eigenmatrices"}


def read_config_file(path) -> dict:
    """Parse and type-check an INI file against the shipped schema."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys such as T and L are case-sensitive
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    schema = _schema()
    model_kind = cp.get("model", "kind", fallback=None) if cp.has_section("model") else None
    out: dict = {"run": {}, "model": {}, "integrator": {}}
    for section in cp.sections():
        if section == "model":
            key = {"ddbh": "model.ddbh", "floquet-dimer": "model.floquet-dimer"}.get(model_kind or "")
            if key is None:
                raise ConfigError(f"{path}: [model] needs kind = ddbh | floquet-dimer")
            allowed = schema[key]
        elif section in ("run", "integrator"):
            allowed = schema[section]
        else:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for k, raw in cp[section].items():
            if section == "model" and k == "kind":
                continue
            if k not in allowed:
                raise ConfigError(f"{path}: unknown key {k!r} in [{section}]")
            out[section][k] = _cast(allowed[k], raw, f"[{section}] {k}")
    if model_kind is not None:
        out["model"]["kind"] = model_kind
    return out


def resolve(command: str, file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge file values and command-line overrides (the latter win)."""
    file_values = file_values or {"run": {}, "model": {}, "integrator": {}}
    run = dict(file_values.get("run", {}))
    if "command" in run and run["command"] != command:
        raise ConfigError(f"config is for command {run['command']!r}, not {command!r}")
    run.pop("command", None)
    integ = dict(file_values.get("integrator", {}))
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k in ("method", "dt", "substeps", "rtol", "atol", "backend"):
            integ[k] = v
        elif k in _RUN_KEYS:
            run[k] = v
        else:
            raise ConfigError(f"unknown option {k!r}")
    model = dict(file_values.get("model", {}))
    kind = model.pop("kind", None)
    if kind is not None and run.get("preset") is not None:
        raise ConfigError("give exactly one model source: a preset or a [model] section")
    try:
        integrator = IntegratorConfig(**integ)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[integrator]: {exc}") from None
    cfg = RunConfig(command=command, model_kind=kind, model_params=model, integrator=integrator, **run)
    return cfg.validate()
