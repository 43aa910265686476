"""Energy-aware step position maps for a planar five-link biped."""

from .biped import BipedConfig, RobotState, Status, TerminationStatus
from .trajectory import GaitParams, PARAM_BOUNDS, gen_com_traj, gen_swing_traj
from .controller import ControllerGains, solve_torques
from .episode import EpisodeConfig, InitialCondition, ObjectiveWeights, run_episode
from .bayesopt import BOBudget, expected_improvement, gp_fit
from .paramgrid import ParamGrid, build_param_grid, optimize_pair, query_params
from .maps import (ReachMap, StepSelector, TorqueMap, build_dense_maps, classify,
                   fit_step_selector, lipm_predict_step, near_optimal_regions, select_step,
                   train_safe_region)
from .config import PipelineConfig

__version__ = "0.1.0"
