# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
"""
Run configuration, read from a Rose-style app config with ``[common]``,
``[model]``, ``[calendar]``, ``[estimation]`` and ``[policy]`` sections or
from a JSON file holding the same sections as objects. Command-line values
override file values.
"""
from dataclasses import dataclass, field, fields, replace
import json
import logging
import os
from typing import Optional

from afterburner.app_config import AppConfig

from .common import Calendar, ParameterError, SchemaError, to_date
from .estimation import DEFAULT_KAPPA, SEARCH_BOX, FitSettings
from .model import DEFAULT_POPULATION, DEFAULT_STEP, _steps_per_day
from .pso import PsoConfig

logger = logging.getLogger(__name__)

_TRUE = ("1", "true", "yes", "on")


def _json_getter(path):
    """A ``get_property``-like lookup over a JSON run file."""
    with open(path, encoding="utf-8") as fh:
        try:
            record = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(record, dict) or not all(
        isinstance(section, dict) for section in record.values()
    ):
        raise SchemaError(f"{path} must map section names to objects")

    def get_property(section, name):
        return record.get(section, {}).get(name)

    return get_property


def _as_bool(value):
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in _TRUE


@dataclass(frozen=True)
class PathsConfig:
    """
    :param params: Parameters fitted with the exact testable population.
    :param params_approx: Parameters fitted with the (1 - theta) N testable
        population, used by the COST policy.
    """

    raw: Optional[str] = None
    imputed: Optional[str] = None
    params: Optional[str] = None
    params_approx: Optional[str] = None
    out_dir: str = "."


@dataclass(frozen=True)
class ModelConfig:
    """Model defaults: N, kappa, the RK4 step and the simulated days."""

    population: float = DEFAULT_POPULATION
    kappa: float = DEFAULT_KAPPA
    step: float = DEFAULT_STEP
    horizon: Optional[int] = None


@dataclass(frozen=True)
class EstimationConfig:
    swarm_size: int = 50
    max_iterations: int = 500
    inertia: float = 0.729
    c1: float = 1.494
    c2: float = 1.494
    fit_kappa: bool = False


@dataclass(frozen=True)
class PolicyConfig:
    """
    :param t_star: BEST start date.
    :param r_max: COST stockpile.
    :param C0: COST Newton starting rate.
    :param sweep_start: First BEST sweep date.
    :param sweep_end: Last BEST sweep date.
    :param int grid_size: Points of the COST brute-force grid, 0 to skip.
    :param int horizon: Days simulated by the policy scenarios.
    """

    t_star: Optional[object] = None
    r_max: Optional[float] = None
    C0: Optional[float] = None
    sweep_start: Optional[object] = None
    sweep_end: Optional[object] = None
    grid_size: int = 0
    horizon: Optional[int] = None


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs besides its positional inputs."""

    paths: PathsConfig = field(default_factory=PathsConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    calendar: Calendar = field(default_factory=Calendar)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    scenario: str = "actual"
    assumption5: bool = False
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        """
        :raises ParameterError: If a value is outside its allowed range.
        """
        if not self.model.population > 0:
            raise ParameterError(f"Population must be positive, got {self.model.population}")
        low, high = SEARCH_BOX["kappa"]
        if not low <= self.model.kappa <= high:
            raise ParameterError(f"kappa {self.model.kappa} outside [{low}, {high}]")
        _steps_per_day(self.model.step)
        if self.policy.r_max is not None and self.policy.r_max <= 0:
            raise ParameterError(f"r_max must be positive, got {self.policy.r_max}")
        if self.policy.C0 is not None and self.policy.C0 <= 0:
            raise ParameterError(f"C0 must be positive, got {self.policy.C0}")
        if self.policy.grid_size < 0:
            raise ParameterError("The brute-force grid size must be non-negative")
        for horizon in (self.model.horizon, self.policy.horizon):
            if horizon is not None and horizon < 1:
                raise ParameterError(f"Horizons must be at least one day, got {horizon}")
        self.pso_config()
        return self

    def pso_config(self):
        estimation = self.estimation
        return PsoConfig(
            estimation.swarm_size,
            estimation.max_iterations,
            estimation.inertia,
            estimation.c1,
            estimation.c2,
            self.seed,
        )

    def fit_settings(self):
        return FitSettings(
            calendar=self.calendar,
            population=self.model.population,
            testable_approximation=self.assumption5,
            kappa=self.model.kappa,
            step=self.model.step,
        )

    def day(self, value):
        """Model time of an ISO date, or of a day number given as is."""
        if value is None:
            return None
        if isinstance(value, (int, float)):
            return float(value)
        return float(self.calendar.day(to_date(value)))

    def with_overrides(self, **overrides):
        """
        A copy with values replaced; keys are field names of any section,
        None values are ignored.

        :rtype: RunConfig
        """
        sections = {
            "paths": self.paths,
            "model": self.model,
            "estimation": self.estimation,
            "policy": self.policy,
        }
        top = {}
        for name, value in overrides.items():
            if value is None:
                continue
            for section_name, section in sections.items():
                if name in section.__dataclass_fields__:
                    sections[section_name] = replace(section, **{name: value})
                    break
            else:
                if name not in ("scenario", "assumption5", "seed"):
                    raise ParameterError(f"Unknown configuration key '{name}'")
                top[name] = value
        return replace(self, **sections, **top)


def _section(get_property, name, cls):
    values = {}
    for item in fields(cls):
        raw = get_property(name, item.name)
        if raw is None or raw == "":
            continue
        values[item.name] = _convert(raw, item.default, item.type)
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"Invalid [{name}] section: {exc}") from exc


def _convert(raw, default, annotation):
    if isinstance(default, bool) or annotation is bool:
        return _as_bool(raw)
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return raw
    text = str(raw).strip()
    try:
        if isinstance(default, int) or "int" in str(annotation):
            return int(text)
        if isinstance(default, float) or "float" in str(annotation):
            return float(text)
    except ValueError as exc:
        raise ParameterError(f"Malformed number '{text}'") from exc
    return text


def _run_config(get_property):
    calendar_values = {}
    for item in fields(Calendar):
        value = get_property("calendar", item.name)
        if value not in (None, ""):
            calendar_values[item.name] = value
    seed = get_property("common", "seed")
    scenario = get_property("common", "scenario")
    try:
        seed = 0 if seed in (None, "") else int(seed)
    except ValueError as exc:
        raise ParameterError(f"Malformed seed '{seed}'") from exc
    return RunConfig(
        paths=_section(get_property, "common", PathsConfig),
        model=_section(get_property, "model", ModelConfig),
        calendar=Calendar(**calendar_values),
        estimation=_section(get_property, "estimation", EstimationConfig),
        policy=_section(get_property, "policy", PolicyConfig),
        scenario=str(scenario) if scenario else "actual",
        assumption5=_as_bool(get_property("common", "assumption5") or False),
        seed=seed,
    )


def run_config_from_app_config(app_config):
    """
    Build the run configuration from a parsed app config.

    :param afterburner.app_config.AppConfig app_config: The app config, or
        None for the defaults.
    :rtype: RunConfig
    """
    if app_config is None:
        return RunConfig()
    return _run_config(app_config.get_property)


def load_run_config(path=None):
    """
    Read a run configuration file; with no path, the defaults.

    :param str path: Rose-style app config, or a ``.json`` run file.
    :rtype: RunConfig
    """
    if path is None:
        return RunConfig()
    if not os.path.isfile(path):
        raise FileNotFoundError(f"Config file does not exist: {path}")
    logger.debug(f"Reading run configuration from {path}")
    if path.endswith(".json"):
        return _run_config(_json_getter(path))
    return run_config_from_app_config(AppConfig.from_file(path))
