# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
"""
One Afterburner app per command. Each app declares its own options in
`cli_spec`, reads the run configuration from its app config file and writes
its artifacts into the output directory.
"""
from abc import ABCMeta, abstractmethod
import os

import numpy as np

from afterburner.apps import AbstractApp

from . import __version__
from .best_policy import best_policy, best_sweep
from .common import AssumptionViolated, ParameterError
from .config import load_run_config, run_config_from_app_config
from .cost_policy import cost_brute_force
from .estimation import fit_model, initial_state_from_dataset
from .imputation import impute
from .load_data import is_imputed_file, load_imputed, load_raw
from .model import integrate, phase_average_rt
from .outcome_models import OutcomeFit
from .save_outputs import (
    load_params,
    save_fit_curves,
    save_frame,
    save_imputed,
    save_json,
    save_outcomes,
    save_params,
    save_sweep,
    save_trace,
    save_trajectory,
)
from .scenarios import SCENARIOS, actual_supply, run_scenario

GLOBAL_SPEC = [
    {
        "names": ["-c", "--config-file"],
        "help": "Pathname of app configuration file (Rose-style or JSON)",
    },
    {"names": ["--out"], "help": "Output directory"},
    {"names": ["--seed"], "type": int, "help": "Seed of the particle swarm"},
    {
        "names": ["--assumption5"],
        "action": "store_true",
        "help": "Approximate the testable population by (1 - theta) N",
    },
]


class EpidemicApp(AbstractApp, metaclass=ABCMeta):
    """
    Base class of the command apps.

    :param list arglist: Command-line arguments of the command; the options
        of `GLOBAL_SPEC` may appear among them.
    """

    def __init__(self, arglist=None, **kwargs):
        super().__init__(version=__version__, **kwargs)
        doc = (self.__doc__ or "").strip().splitlines()
        self._parse_args(arglist, desc=doc[0] if doc else None)
        config_file = self.cli_args.config_file
        if config_file and not os.path.isfile(config_file):
            raise FileNotFoundError(f"Config file does not exist: {config_file}")
        if config_file and not config_file.endswith(".json"):
            self._parse_app_config()
        self._set_message_level()

        # Instance attributes set later from the app config
        self.config = None
        self.out_dir = None

    @property
    def cli_spec(self):
        """
        Defines the command-line interface specification for the app.
        """
        return GLOBAL_SPEC + self.command_spec

    @property
    @abstractmethod
    def command_spec(self):
        """
        Options of the command itself, as a list of dicts each with "names"
        and the keyword arguments of ``add_argument``.
        """

    @abstractmethod
    def run(self, *args, **kwargs):
        """
        Run the app.

        :returns: The exit status.
        :rtype: int
        """

    def _get_app_options(self):
        """Read the run configuration and apply the command-line overrides."""
        config_file = self.cli_args.config_file
        if config_file and config_file.endswith(".json"):
            config = load_run_config(config_file)
        else:
            config = run_config_from_app_config(getattr(self, "app_config", None))
        overrides = {
            "out_dir": self.cli_args.out,
            "seed": self.cli_args.seed,
        }
        if self.cli_args.assumption5:
            overrides["assumption5"] = True
        self.config = config.with_overrides(**overrides)
        self.out_dir = self.config.paths.out_dir
        if not os.path.isdir(self.out_dir):
            os.makedirs(self.out_dir)
        self.logger.debug(f"Writing outputs to {self.out_dir}")

    def _output(self, name):
        return os.path.join(self.out_dir, name)

    def _imputed_path(self):
        return (
            getattr(self.cli_args, "imputed", None)
            or self.config.paths.imputed
            or self._output("imputed.csv")
        )

    def _params_path(self):
        return (
            getattr(self.cli_args, "params", None)
            or self.config.paths.params
            or self._output("params.json")
        )

    def _horizon(self, dataset):
        horizon = getattr(self.cli_args, "horizon", None)
        if horizon is None:
            horizon = self.config.policy.horizon or self.config.model.horizon
        return dataset.tau - 1 if horizon is None else horizon

    def _approximate_params_path(self):
        return (
            getattr(self.cli_args, "params_approx", None)
            or self.config.paths.params_approx
        )

    def _load_fitted(self, params_path=None):
        """(dataset, fit, params, initial state) for the policy commands."""
        dataset = load_imputed(self._imputed_path())
        fit = load_params(params_path or self._params_path())
        params = fit.model_params()
        initial = initial_state_from_dataset(dataset, params.population, fit.kappa)
        return dataset, fit, params, initial


class ImputeApp(EpidemicApp):
    """Turn raw daily records into the imputed model series."""

    @property
    def command_spec(self):
        return [
            {"names": ["raw"], "help": "Raw daily records (CSV)"},
            {
                "names": ["-o", "--output"],
                "help": "Imputed CSV to write (default: <out>/imputed.csv)",
            },
        ]

    def run(self):
        self._get_app_options()
        output = self.cli_args.output or self._output("imputed.csv")
        if is_imputed_file(self.cli_args.raw):
            self.logger.info(f"{self.cli_args.raw} is already imputed, rewriting it")
            dataset = load_imputed(self.cli_args.raw)
        else:
            dataset = impute(load_raw(self.cli_args.raw), self.config.calendar)
        save_imputed(dataset, output)
        print(
            f"tau={dataset.tau} diagnosed={dataset.y1_bar[-1]:.0f} "
            f"removed={dataset.y2_bar[-1]:.0f} tests={dataset.total_tests:.0f}"
        )
        return 0


class FitApp(EpidemicApp):
    """Estimate the model parameters from an imputed dataset."""

    @property
    def command_spec(self):
        return [
            {"names": ["imputed"], "help": "Imputed CSV"},
            {
                "names": ["--fit-kappa"],
                "action": "store_true",
                "help": "Also estimate the initial-infected multiplier",
            },
        ]

    def run(self):
        self._get_app_options()
        dataset = load_imputed(self.cli_args.imputed)
        settings = self.config.fit_settings()
        fit_kappa = self.cli_args.fit_kappa or self.config.estimation.fit_kappa
        fit = fit_model(dataset, self.config.pso_config(), settings, fit_kappa)
        save_params(fit, self._output("params.json"))
        save_trace(fit.trace, self._output("pso_trace.csv"))

        params = fit.model_params()
        initial = initial_state_from_dataset(dataset, params.population, fit.kappa)
        traj = integrate(initial, params, actual_supply(dataset), dataset.tau - 1, settings.step)
        save_fit_curves(traj, dataset, self._output("fit_curves.csv"))
        print(f"rho={fit.rho:.4f} cost={fit.cost:.6g}")
        return 0


class _FittedApp(EpidemicApp):
    """Commands reading params.json and the imputed dataset."""

    _common_spec = [
        {"names": ["--params"], "help": "Parameter file (default: <out>/params.json)"},
        {"names": ["--imputed"], "help": "Imputed CSV (default: <out>/imputed.csv)"},
        {"names": ["--horizon"], "type": int, "help": "Days to simulate"},
    ]

    _approx_spec = [
        {
            "names": ["--params-approx"],
            "help": "Parameter file fitted with --assumption5, used by the COST policy",
        },
    ]


class SimulateApp(_FittedApp):
    """Simulate a scenario driven by the recorded tests."""

    @property
    def command_spec(self):
        return self._common_spec + [
            {
                "names": ["--scenario"],
                "choices": ["actual", "no-lockdown", "no-unlock"],
                "help": "Scenario to simulate (default from the config)",
            },
        ]

    def run(self):
        self._get_app_options()
        dataset, _, params, initial = self._load_fitted()
        name = self.cli_args.scenario or self.config.scenario
        result = run_scenario(
            name,
            params,
            dataset,
            initial,
            self.config.calendar,
            self._horizon(dataset),
            step=self.config.model.step,
        )
        calendar = self.config.calendar
        traj = result.trajectory
        save_trajectory(traj, self._output(f"trajectory_{name}.csv"), calendar.start)

        last = traj.sample_times[-1]
        edges = [traj.sample_times[0], calendar.lockdown_day, calendar.unlock_day, last + 1]
        phases = {}
        for label, start, end in zip(("before", "during", "after"), edges, edges[1:]):
            if start < end and start <= last:
                phases[label] = phase_average_rt(traj, result.params, start, end)
        save_json(phases, self._output(f"rt_phases_{name}.json"))
        return 0


class BestApp(_FittedApp):
    """The BEST rate from a start date, with an optional sweep."""

    @property
    def command_spec(self):
        return self._common_spec + [
            {"names": ["--date"], "help": "Start date t* (ISO-8601)"},
            {"names": ["--sweep-start"], "help": "First start date of a sweep"},
            {"names": ["--sweep-end"], "help": "Last start date of a sweep"},
        ]

    def run(self):
        self._get_app_options()
        dataset, _, params, initial = self._load_fitted()
        policy = self.config.policy
        epoch = self.config.calendar.start
        t_star = self.config.day(self.cli_args.date or policy.t_star)
        if t_star is None:
            raise ParameterError("best needs a start date: --date or [policy] t_star")
        step = self.config.model.step
        actual = integrate(initial, params, actual_supply(dataset), self._horizon(dataset), step)
        solution = best_policy(actual, params, t_star, step=step)
        save_json(solution.to_dict(epoch), self._output("best.json"))
        save_trajectory(solution.trajectory, self._output("best_trajectory.csv"), epoch)

        sweep_start = self.config.day(self.cli_args.sweep_start or policy.sweep_start)
        sweep_end = self.config.day(self.cli_args.sweep_end or policy.sweep_end)
        if sweep_start is not None and sweep_end is not None:
            days = np.arange(sweep_start, sweep_end + 1)
            entries = best_sweep(actual, params, days, step=step)
            save_sweep(entries, self._output("best_sweep.csv"), epoch)
        print(f"c_star={solution.c_star:.6g} peak_xI={solution.peak_xI:.6g}")
        return 0


class CostApp(_FittedApp):
    """The COST rate for a stockpile, with an optional brute-force check."""

    @property
    def command_spec(self):
        return self._common_spec + self._approx_spec + [
            {"names": ["--rmax"], "type": float, "help": "Stockpile of tests"},
            {"names": ["--C0"], "type": float, "help": "Newton starting rate"},
            {
                "names": ["--grid-size"],
                "type": int,
                "help": "Brute-force grid points around the solution (0 skips)",
            },
        ]

    def run(self):
        self._get_app_options()
        dataset, _, params, initial = self._load_fitted(self._approximate_params_path())
        policy = self.config.policy
        r_max = self.cli_args.rmax or policy.r_max
        if r_max is None:
            raise ParameterError("cost needs a stockpile: --rmax or [policy] r_max")
        result = run_scenario(
            "cost",
            params,
            dataset,
            initial,
            self.config.calendar,
            self._horizon(dataset),
            r_max=r_max,
            C0=self.cli_args.C0 or policy.C0,
            step=self.config.model.step,
        )
        solution = result.policy
        save_json(solution.to_dict(), self._output("cost.json"))
        save_trajectory(
            result.trajectory, self._output("cost_trajectory.csv"), self.config.calendar.start
        )

        grid_size = self.cli_args.grid_size
        if grid_size is None:
            grid_size = policy.grid_size
        if grid_size:
            grid = np.geomspace(0.5 * solution.C, 2.0 * solution.C, grid_size)
            best, table = cost_brute_force(
                params, initial, r_max, grid, step=self.config.model.step
            )
            save_frame(table, self._output("cost_grid.csv"))
            self.logger.info(f"Brute-force rate {best:.6g} against COST rate {solution.C:.6g}")
        print(f"C={solution.C:.6g} T={solution.T:.4g} iterations={solution.iterations}")
        return 0


class PredictApp(_FittedApp):
    """ICU occupancy and deaths under the actual and a policy scenario."""

    @property
    def command_spec(self):
        return self._common_spec + self._approx_spec + [
            {
                "names": ["--policy"],
                "choices": list(SCENARIOS),
                "default": "best",
                "help": "Scenario compared with the actual one (default: best)",
            },
            {"names": ["--date"], "help": "BEST start date (ISO-8601)"},
            {"names": ["--rmax"], "type": float, "help": "COST stockpile"},
        ]

    def _parameter_sets(self):
        """
        The fitted parameter sets by label, "exact" or "approximate"
        according to the testable population they were fitted with.
        """
        fit = load_params(self._params_path())
        sets = {_set_label(fit): fit}
        approx_path = self._approximate_params_path()
        if approx_path:
            approx = load_params(approx_path)
            if not approx.settings.testable_approximation:
                raise AssumptionViolated(
                    f"{approx_path} was not fitted with --assumption5"
                )
            sets["approximate"] = approx
        return sets

    def run(self):
        self._get_app_options()
        dataset = load_imputed(self._imputed_path())
        policy = self.config.policy
        calendar = self.config.calendar
        horizon = self._horizon(dataset)
        step = self.config.model.step

        baselines = {}
        for label, fit in self._parameter_sets().items():
            params = fit.model_params()
            initial = initial_state_from_dataset(dataset, params.population, fit.kappa)
            actual = run_scenario(
                "actual", params, dataset, initial, calendar, horizon, step=step
            )
            outcome = OutcomeFit.fit(actual.trajectory, dataset)
            save_json(outcome.to_dict(), self._output(f"outcome_fit_{label}.json"))
            baselines[label] = (params, initial, actual.trajectory, outcome)

        if self.cli_args.policy == "cost":
            if "approximate" not in baselines:
                raise AssumptionViolated(
                    "predict --policy cost needs parameters fitted with --assumption5 "
                    "(--params-approx)"
                )
            label = "approximate"
        else:
            label = "exact" if "exact" in baselines else "approximate"
        params, initial, actual, outcome = baselines[label]
        self.logger.info(f"Comparing with the {label} parameter set")
        save_json(outcome.to_dict(), self._output("outcome_fit.json"))

        compared = run_scenario(
            self.cli_args.policy,
            params,
            dataset,
            initial,
            calendar,
            horizon,
            t_star=self.config.day(self.cli_args.date or policy.t_star),
            r_max=self.cli_args.rmax or policy.r_max,
            C0=policy.C0,
            step=step,
        )
        summary = save_outcomes(
            actual, compared.trajectory, outcome, self.out_dir, calendar.start, label
        )
        print(
            f"ICU peak reduction {summary['icu_peak_reduction_pct']:.2f}%, "
            f"deaths reduction {summary['deaths_reduction_pct']:.2f}%"
        )
        return 0


def _set_label(fit):
    return "approximate" if fit.settings.testable_approximation else "exact"


APPS = {
    "impute": ImputeApp,
    "fit": FitApp,
    "simulate": SimulateApp,
    "best": BestApp,
    "cost": CostApp,
    "predict": PredictApp,
}
