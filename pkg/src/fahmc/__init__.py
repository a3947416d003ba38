"""Federated averaging Hamiltonian Monte Carlo.

A numpy toolkit for sampling a global Bayesian posterior that is split as a
weighted sum of node losses: each node runs local leapfrog HMC (optionally
with stochastic gradients and cross-node correlated momentum) and the nodes
are synchronized by weighted parameter averaging every T iterations.
Includes closed-form oracles for quadratic targets, stepsize schedules,
Wasserstein/calibration diagnostics, and a config-driven experiment
harness with a CLI (``fahmc``).
"""

from .errors import (ConfigError, ContractError, DivergenceError,
                     NonConvergenceError, ScheduleError, UnsupportedNoiseError)
from .models import (EXACT, AssumptionReport, GradientNoise, LogisticNode,
                     QuadraticNode, WeightedSumModel, check_assumptions,
                     generate_logistic_data, grad, load_logistic_csv,
                     save_logistic_csv, stochastic_grad)
from .integrator import LeapfrogResult, hmc_chain, leapfrog, quadratic_exact_flow
from .schedules import (ConstantSchedule, EpochDoublingSchedule,
                        accuracy_tuned_stepsize, default_c_d,
                        default_leapfrog_steps, epoch_doubling_schedule)
from .federation import (FederationConfig, NodeState, debias_leapfrog,
                         quadratic_pair_sync_moments, run_debias_fa_hmc,
                         run_fa_hmc, run_fa_ld, sample_correlated_momentum,
                         weighted_mean)
from .metrics import (DiagGaussian, empirical_moments,
                      gaussian_product_posterior, marginal_error,
                      predictive_metrics, split_r_hat, subsample_rows,
                      w2_from_samples, w2_gaussian)
from .trace import ChainTrace, read_snapshots, write_snapshots, write_trace_csv

__version__ = "0.1.0"
