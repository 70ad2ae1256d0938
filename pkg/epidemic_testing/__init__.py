# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
__version__ = '0.1.0'


from epidemic_testing.model import ModelParams, State, TestSupply, Trajectory, integrate
from epidemic_testing.schedule import Schedule
from epidemic_testing.load_data import load_raw, load_imputed
from epidemic_testing.imputation import ImputedDataset, impute
from epidemic_testing.estimation import FitResult, fit_model
from epidemic_testing.outcome_models import OutcomeFit
from epidemic_testing.best_policy import best_policy, best_rate
from epidemic_testing.cost_policy import solve_cost
from epidemic_testing.apps import ImputeApp, FitApp, SimulateApp, BestApp, CostApp, PredictApp
