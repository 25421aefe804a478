"""Federated intrusion-detection simulator with CPM-weighted (FedMADE) aggregation."""
from .kernels import BACKEND
from .nn import ModelParams, OptimizerState, LossConfig, forward, train_step, linear_combination, gradient_check
from .aggregation import (compute_cpm, cluster_cpms, compute_ccpms, solve_weights, assign_client_weights,
                          fedmade_aggregate, fedavg_aggregate, scaffold_server_step)
from .config import ExperimentConfig, parse_config
from .federation import run_experiment

__version__ = "0.1.0"
