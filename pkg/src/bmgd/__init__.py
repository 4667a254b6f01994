"""Buffered mini-batch gradient descent: training engine, linear-system
analysis, oracles and an experiment driver."""

from .datagen import Dataset, GroundTruth, gen_linear_dataset, gen_logistic_dataset, read_dataset, write_dataset
from .engine import BmgdConfig, CostLedger, CostModel, TrajectoryReport, run_bmgd, run_mgd, sgd_step
from .errors import BMGDError
from .linsys import assemble_system, build_buffer_operators, convergence_certificate, ols_distance, stable_solution
from .losses import LEAST_SQUARES, LOGISTIC, BatchView, gradient, value
from .oracles import logistic_mle, ols_fit, recurrence_trajectory
from .partition import PartitionPlan
from .schedule import Constant, Cosine, Exponential, HorizonTuned, Polynomial, StageWise, check_conditions

__version__ = "0.1.0"
