from .errors import SrlError
from .errors import DomainError
from .errors import ConfigError
from .errors import ContractViolation
from .errors import WarmupError
from .errors import NonFiniteError
from .errors import NotPositiveDefiniteError

from .mdp import Transition
from .mdp import Trajectory
from .mdp import DiscountSpec
from .mdp import GoalSet
from .mdp import discounted_return
from .mdp import returns_to_go
from .mdp import goal_value
from .mdp import success_return
from .mdp import trajectory_log_probability
from .mdp import classify_trajectory

from .trajectory_io import write_trajectory_jsonl
from .trajectory_io import read_trajectory_jsonl

from .hexsim import RobotConfig
from .hexsim import DamageMask
from .hexsim import TaskMode
from .hexsim import SimState
from .hexsim import reset
from .hexsim import step
from .hexsim import apply_damage
from .hexsim import observation
from .hexsim import tripod_gait_policy
from .hexsim import make_task
from .hexsim import healthy_mask
from .hexsim import lock_joint
from .hexsim import amputate_leg

from .neuralnet import LayerSpec
from .neuralnet import NetworkParams
from .neuralnet import init_network
from .neuralnet import build_actor
from .neuralnet import build_critic
from .neuralnet import forward
from .neuralnet import backward
from .neuralnet import mc_dropout_q_samples
from .neuralnet import make_optimizer
from .neuralnet import optimize_step

from .checkpoint import save_checkpoint
from .checkpoint import load_checkpoint

from .ddpg import ReplayBuffer
from .ddpg import NoiseSchedule
from .ddpg import store
from .ddpg import sample_minibatch
from .ddpg import explore
from .ddpg import soft_update
from .ddpg import critic_update
from .ddpg import actor_update
from .ddpg import build_learner
from .ddpg import ddpg_step

from .bayes_grad import SquaredExponential
from .bayes_grad import gp_fit
from .bayes_grad import gp_posterior
from .bayes_grad import mc_policy_gradient
from .bayes_grad import bq_posterior_gradient
from .bayes_grad import SoftmaxBandit
from .bayes_grad import estimator_variance_study

from .controller import ActionProposalSet
from .controller import ControllerSettings
from .controller import propose
from .controller import thompson_select
from .controller import improvement_probability
from .controller import controller_decide
from .controller import srl_step
from .controller import partial_guidance_report

from .config import DamageSchedule
from .config import ExperimentConfig
from .config import load_experiment_config

from .metrics import RunMetrics
from .metrics import ComparisonSummary
from .metrics import success_rate
from .metrics import avg_first_success
from .metrics import compare
from .metrics import overall_success

from .csv_out import read_run_metrics
from .csv_out import write_comparison_csv
from .csv_out import read_comparison_csv
from .csv_out import plot_data
from .csv_out import export_plot_data

from .harness import run_seed
from .harness import run_experiment
from .harness import evaluate_checkpoint
