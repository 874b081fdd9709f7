"""Budgeted estimation of confusion-matrix shifts in prediction APIs."""
from ._accel import backend
from .budget import (ConfidenceParams, bound_constant, masa_loss_bound, required_budget_flat,
                     required_budget_masa, sigma_bound)
from .core import (Allocation, ConfusionMatrix, Dimensions, LabelDistribution, PartitionWeights,
                   ShiftMatrix, WeightMatrix, expected_loss_closed_form, optimal_loss, shift_between,
                   weighted_frobenius_sq)
from .estimator import (PartitionStats, StatsGrid, batch_score, fuse_shift, observe,
                        score_from_distribution, weighted_score_from_counts)
from .oracle import (EndpointConfig, HttpOracle, PartitionedDataset, PredictionOracle, ReplayOracle,
                     Scenario, SimulatedOracle, scenario_true_confusion, skewed_scenario)
from .sampler import (RunResult, SamplerConfig, TraceEvent, lemma1_allocation, run_masa,
                      run_oracle_optimal, run_stratified, run_uniform, select_partition, simulate)

__version__ = "0.1.0"
