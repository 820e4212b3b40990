"""Offline learning toolkit for tabular robust two-player zero-sum Markov games."""

from .dataset import (
    Dataset,
    EmpiricalModel,
    OccupancyTable,
    TransitionCounts,
    count_transitions,
    dataset_counts,
    estimate_model,
    occupancy,
    sample_dataset,
    two_stage_subsample,
)
from .evaluation import GapReport, horizon_factor, nash_gap, robust_best_response, robust_policy_value, theory_bound
from .experiment import ExperimentConfig, fit_loglog_slope, run_experiment
from .game import MarkovGame, PolicyPair, Sense, UncertaintySpec, load_game, save_game, uniform_policy_pair, validate_game
from .instances import HardInstanceParams, gv_codebook, hard_rmdp, random_game
from .matgame import MatrixNash, exploitability, solve_zero_sum
from .multiagent import MultiGame, multi_rtz_vi_lcb, stage_equilibrium, zero_sum_stage_solver
from .solver import PenaltyParams, SolveResult, penalty, rtz_vi, rtz_vi_lcb
from .uncertainty import best_case_expectation, empirical_variance, worst_case_expectation

__version__ = "0.1.0"
