"""Optimistic exploration with function approximation on deterministic metric MDPs."""

from .agents import (AGENT_KINDS, LayeredQEstimate, StepDiagnostic, TabularAgent,
                     TrainingResult, UCRLFAAgent, make_agent, optimism_margin, run_training)
from .approximators import (KeyValueSet, LinearSpanEvaluator, NearestNeighborEvaluator,
                            PropertyReport, TabularEvaluator, check_oracle_properties,
                            linear_evaluate, nn_evaluate)
from .environments import (ClusterLinearSpec, HardInstanceSpec, line_world_constants,
                           make_cluster_linear, make_finite_random, make_hard_instance,
                           make_line_world, node_depth)
from .harness import (ConfigError, ExperimentConfig, FitResult, InsufficientDataError,
                      OutputExistsError, build_environment, dump_oracle, epsilon_scan,
                      fit_exponent, run_experiment, sweep, verify_experiment)
from .mdp import (INFINITE_GAP, ContractViolation, DeterminismViolation, DiscreteMetric,
                  EnvironmentIntegrityError, EnvironmentSpec, ExperienceBuffer,
                  LipschitzConstants, Metric, ProductL1Metric, RegretLedger, TransitionRecord,
                  append_episode, check_pseudometric, check_reward_range, episode_regret,
                  finite_env, nearest_gap, step)
from .metric_tools import (CoverResult, MetricSample, bound_at_optimal_epsilon, diameter,
                           greedy_net, greedy_packing, grid_sample, is_maximal_packing, is_net,
                           is_packing, net_size_scale, optimal_epsilon, regret_lower_bound,
                           regret_upper_bound)
from .oracle import (ValueSolution, brute_force_value, evaluate_policy, exact_dp, grid_dp,
                     rollout, solve)

__version__ = "0.1.0"
