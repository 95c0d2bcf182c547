"""
Deterministic kinematic simulator of a six-legged crawler with runtime
damage injection.

Legs are ordered left-front, left-middle, left-rear, right-front,
right-middle, right-rear; each carries coxa, femur and tibia joints.
The two tripods are legs {0, 2, 4} and {1, 3, 5}.

The body moves by a 2.5-D gait model rather than a physics engine:

    push_l   = -delta_coxa_l * (1 + cos(tibia_l)) / 2   for legs in contact
    forward  = k_p * support * (present / num_legs) * sum(push_l)
    turn     = k_h * (right push - left push)
               + k_bias * (missing left - missing right) * forward

A leg is in contact when it is present and its femur sits at or below
contact_tol both before and after the step.  support drops to slip_factor
below three contacts and to zero without any.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigError, ContractViolation, DomainError
from .mdp import DiscountSpec, GoalSet, Trajectory, Transition, goal_value


logger = logging.getLogger(__name__)

JOINT_NAMES = ('coxa', 'femur', 'tibia')
LEG_NAMES = ('left_front', 'left_middle', 'left_rear',
             'right_front', 'right_middle', 'right_rear')
TRIPODS = ((0, 2, 4), (1, 3, 5))
RIGHT_MIDDLE_LEG = 4


@dataclass(frozen=True, eq=False)
class RobotConfig:
    num_legs: int = 6
    joints_per_leg: int = 3
    joint_limits: Optional[np.ndarray] = None
    max_steps: int = 400
    max_delta: float = 0.1
    k_p: float = 0.25
    k_h: float = 0.5
    k_bias: float = 0.15
    slip_factor: float = 0.5
    contact_tol: float = 1e-6
    gait_period: int = 20
    coxa_amplitude: float = 0.2
    femur_lift: float = 0.3
    observe_damage: bool = True
    init_noise: float = 0.0

    def __post_init__(self):
        if self.num_legs < 2:
            raise ConfigError(f"num_legs must be at least 2, got {self.num_legs}")
        if self.joints_per_leg < 1:
            raise ConfigError(f"joints_per_leg must be at least 1, got {self.joints_per_leg}")
        if self.max_steps < 1:
            raise ConfigError(f"max_steps must be positive, got {self.max_steps}")
        if self.gait_period < 2 or self.gait_period % 2:
            raise ConfigError(f"gait_period must be an even integer >= 2, got {self.gait_period}")
        if self.max_delta <= 0:
            raise ConfigError("max_delta must be positive")

        if self.joint_limits is None:
            limits = default_joint_limits(self.num_legs, self.joints_per_leg)
        else:
            limits = np.array(self.joint_limits, dtype=float)
        if limits.shape != (self.num_joints, 2):
            raise ConfigError(
                f"joint_limits must have shape ({self.num_joints}, 2), got {limits.shape}")
        if not np.all(limits[:, 0] < limits[:, 1]):
            raise ConfigError("every joint limit must satisfy min < max")
        limits.setflags(write=False)
        object.__setattr__(self, 'joint_limits', limits)

    @property
    def num_joints(self):
        return self.num_legs * self.joints_per_leg

    def joint_index(self, leg, joint):
        if isinstance(joint, str):
            joint = JOINT_NAMES.index(joint)
        if not 0 <= leg < self.num_legs or not 0 <= joint < self.joints_per_leg:
            raise ConfigError(f"no joint {joint} on leg {leg}")
        return leg * self.joints_per_leg + joint

    def leg_sides(self):
        """+1 for legs on the right, -1 for legs on the left."""
        half = self.num_legs // 2
        return np.array([-1.0 if leg < half else 1.0 for leg in range(self.num_legs)])

    def stride(self):
        """Per-step coxa sweep of the tripod gait."""
        return 4.0 * self.coxa_amplitude / self.gait_period


def default_joint_limits(num_legs=6, joints_per_leg=3):
    per_leg = [(-0.8, 0.8), (-0.5, 1.0), (-1.2, 1.2)]
    rows = [per_leg[j % len(per_leg)] for _ in range(num_legs) for j in range(joints_per_leg)]
    return np.array(rows, dtype=float)


@dataclass(frozen=True, eq=False)
class DamageMask:
    operable: np.ndarray
    leg_present: np.ndarray

    def __post_init__(self):
        operable = np.array(self.operable, dtype=bool)
        leg_present = np.array(self.leg_present, dtype=bool)
        if operable.ndim != 1 or leg_present.ndim != 1:
            raise ConfigError("damage flags must be one-dimensional")
        if len(leg_present) == 0 or len(operable) % len(leg_present):
            raise ConfigError(
                f"{len(operable)} joint flags do not split over {len(leg_present)} legs")
        per_leg = operable.reshape(len(leg_present), -1)
        if np.any(per_leg[~leg_present]):
            raise ConfigError("joints of a missing leg must be inoperable")
        operable.setflags(write=False)
        leg_present.setflags(write=False)
        object.__setattr__(self, 'operable', operable)
        object.__setattr__(self, 'leg_present', leg_present)

    @property
    def dof(self):
        return int(self.operable.sum())

    def __eq__(self, other):
        return (isinstance(other, DamageMask)
                and np.array_equal(self.operable, other.operable)
                and np.array_equal(self.leg_present, other.leg_present))

    def __le__(self, other):
        """Pointwise: every flag set here is also set in other."""
        return (not np.any(self.operable & ~other.operable)
                and not np.any(self.leg_present & ~other.leg_present))

    def check_config(self, config):
        if len(self.operable) != config.num_joints or len(self.leg_present) != config.num_legs:
            raise ConfigError(
                f"damage mask sized for {len(self.leg_present)} legs x "
                f"{len(self.operable)} joints, robot has {config.num_legs} x "
                f"{config.num_joints}")


def healthy_mask(config):
    return DamageMask(np.ones(config.num_joints, dtype=bool),
                      np.ones(config.num_legs, dtype=bool))


def lock_joint(mask, leg, joint):
    """Mask with one additional joint frozen."""
    joints_per_leg = len(mask.operable) // len(mask.leg_present)
    if isinstance(joint, str):
        joint = JOINT_NAMES.index(joint)
    operable = mask.operable.copy()
    operable[leg * joints_per_leg + joint] = False
    return DamageMask(operable, mask.leg_present.copy())


def amputate_leg(mask, leg):
    """Mask with a whole leg removed."""
    joints_per_leg = len(mask.operable) // len(mask.leg_present)
    operable = mask.operable.copy()
    operable[leg * joints_per_leg:(leg + 1) * joints_per_leg] = False
    leg_present = mask.leg_present.copy()
    leg_present[leg] = False
    return DamageMask(operable, leg_present)


def random_leg(config, seed):
    return int(np.random.default_rng(seed).integers(config.num_legs))


def random_leg_amputation(config, seed):
    """Amputate a leg chosen uniformly from a seeded generator."""
    return amputate_leg(healthy_mask(config), random_leg(config, seed))


@dataclass(frozen=True)
class TaskMode:
    variant: str
    oracle_threshold: float
    target: Optional[Tuple[float, float]] = None
    radius: Optional[float] = None
    terminal_bonus: float = 0.0

    def __post_init__(self):
        if self.variant not in ('x', 'xy', 'p2p'):
            raise ConfigError(f"unknown task variant '{self.variant}'")
        if not math.isfinite(self.oracle_threshold):
            raise ConfigError("oracle_threshold must be finite")
        if self.variant == 'p2p':
            if self.target is None or self.radius is None or self.radius <= 0:
                raise ConfigError("p2p task needs a target and a positive radius")

    @property
    def label(self):
        return {'x': 'Task_X', 'xy': 'Task_XY', 'p2p': 'Task_P2P'}[self.variant]


@dataclass(frozen=True, eq=False)
class SimState:
    joint_angles: np.ndarray
    body_pose: np.ndarray
    gait_phase: float
    step_count: int
    damage: DamageMask
    config: RobotConfig = field(repr=False)
    task: TaskMode = field(repr=False)
    cumulative_reward: float = 0.0
    succeeded: bool = False


def _phase(step_count, config):
    return (step_count % config.gait_period) / config.gait_period


def observation_dim(config):
    flags = config.num_joints if config.observe_damage else 0
    return config.num_joints + 3 + 1 + flags


def observation(state):
    """Joint angles, body pose (x, y, heading), gait phase, operable flags."""
    parts = [state.joint_angles, state.body_pose, [state.gait_phase]]
    if state.config.observe_damage:
        parts.append(state.damage.operable.astype(float))
    return np.concatenate(parts).astype(float)


def reset(config, damage, task, seed=0):
    """
    Neutral stance at the origin.

    returns (SimState, observation)
    """
    damage.check_config(config)

    angles = np.zeros(config.num_joints)
    if config.init_noise > 0:
        rng = np.random.default_rng(seed)
        angles = angles + rng.uniform(-config.init_noise, config.init_noise, config.num_joints)
        # keep feet on the ground
        angles[1::config.joints_per_leg] = 0.0
        angles = np.clip(angles, config.joint_limits[:, 0], config.joint_limits[:, 1])

    state = SimState(
        joint_angles=angles,
        body_pose=np.zeros(3),
        gait_phase=0.0,
        step_count=0,
        damage=damage,
        config=config,
        task=task)

    return state, observation(state)


def goal_reached(state):
    """Single success predicate: cumulative reward has crossed the oracle threshold."""
    return state.cumulative_reward >= state.task.oracle_threshold


def goal_set(task):
    return GoalSet(goal_reached, label=task.label)


def _distance_to_target(pose, task):
    return math.hypot(task.target[0] - pose[0], task.target[1] - pose[1])


def task_reward(prev, next_state, task):
    """
    Per-step reward.

    x:   displacement along the X axis
    xy:  change of planar distance from the start point
    p2p: decrease of distance to the target, plus the goal bonus on the
         step that enters the target radius
    """
    if task.variant == 'x':
        return float(next_state.body_pose[0] - prev.body_pose[0])

    if task.variant == 'xy':
        before = math.hypot(prev.body_pose[0], prev.body_pose[1])
        after = math.hypot(next_state.body_pose[0], next_state.body_pose[1])
        return float(after - before)

    before = _distance_to_target(prev.body_pose, task)
    after = _distance_to_target(next_state.body_pose, task)
    reward = before - after
    if after <= task.radius < before:
        reward += task.terminal_bonus
    return float(reward)


def _kinematics(config, damage, angles, new_angles, heading):
    """Body displacement (dx, dy, dheading) for one step."""
    jpl = config.joints_per_leg
    present = damage.leg_present
    sides = config.leg_sides()

    if jpl >= 2:
        femur_before = angles[1::jpl]
        femur_after = new_angles[1::jpl]
        contact = present & (femur_before <= config.contact_tol) & (femur_after <= config.contact_tol)
    else:
        contact = present.copy()

    delta_coxa = new_angles[0::jpl] - angles[0::jpl]
    if jpl >= 3:
        reach = 0.5 * (1.0 + np.cos(new_angles[2::jpl]))
    else:
        reach = np.ones(config.num_legs)

    push = np.where(contact, -delta_coxa * reach, 0.0)

    n_contact = int(contact.sum())
    if n_contact >= 3:
        support = 1.0
    elif n_contact > 0:
        support = config.slip_factor
    else:
        support = 0.0

    present_fraction = present.sum() / config.num_legs
    forward = config.k_p * support * present_fraction * push.sum()

    asymmetry = push[sides > 0].sum() - push[sides < 0].sum()
    missing_left = int((~present & (sides < 0)).sum())
    missing_right = int((~present & (sides > 0)).sum())
    turn = config.k_h * asymmetry + config.k_bias * (missing_left - missing_right) * abs(forward)

    mid_heading = heading + 0.5 * turn
    return forward * math.cos(mid_heading), forward * math.sin(mid_heading), turn


def step(state, action):
    """
    Advance the simulation one step.

    returns (SimState, reward, done)
    """
    config = state.config
    action = np.asarray(action, dtype=float)
    if action.shape != (config.num_joints,):
        raise DomainError(
            f"action must have length {config.num_joints}, got shape {action.shape}")

    delta = np.clip(action, -config.max_delta, config.max_delta)
    delta = np.where(state.damage.operable, delta, 0.0)

    angles = state.joint_angles
    new_angles = np.clip(angles + delta, config.joint_limits[:, 0], config.joint_limits[:, 1])
    # frozen joints keep their exact value
    new_angles = np.where(state.damage.operable, new_angles, angles)

    dx, dy, dheading = _kinematics(config, state.damage, angles, new_angles, state.body_pose[2])
    pose = state.body_pose + np.array([dx, dy, dheading])

    step_count = state.step_count + 1
    moved = replace(
        state,
        joint_angles=new_angles,
        body_pose=pose,
        gait_phase=_phase(step_count, config),
        step_count=step_count)

    reward = task_reward(state, moved, state.task)
    cumulative = state.cumulative_reward + reward
    next_state = replace(moved, cumulative_reward=cumulative)
    succeeded = goal_reached(next_state)
    next_state = replace(next_state, succeeded=succeeded)

    done = succeeded or step_count >= config.max_steps
    return next_state, reward, done


def apply_damage(state, damage):
    """
    Inject damage.  Damage never heals; newly inoperable joints stay frozen
    at their current angle.
    """
    damage.check_config(state.config)
    if not damage <= state.damage:
        raise ContractViolation("damage mask attempts to re-enable a joint or leg")
    if damage == state.damage:
        return state
    logger.debug("damage applied at step %d: %d -> %d DoF",
                 state.step_count, state.damage.dof, damage.dof)
    return replace(state, damage=damage)


def tripod_gait_policy(obs, config):
    """
    Scripted tripod gait, the behavior policy.

    The tripod in stance sweeps its coxa joints backward while the other
    tripod lifts its femur, swings forward and lowers again.  Roles swap
    every half period, so phase p and p + 0.5 produce mirrored actions.
    """
    obs = np.asarray(obs, dtype=float)
    phase = float(obs[config.num_joints + 3])
    jpl = config.joints_per_leg
    stride = config.stride()
    lift = config.femur_lift / (config.gait_period / 4)

    action = np.zeros(config.num_joints)
    half = phase % 0.5
    tripod_in_stance = 0 if phase < 0.5 else 1

    for tripod_id, legs in enumerate(TRIPODS):
        for leg in legs:
            if leg >= config.num_legs:
                continue
            base = leg * jpl
            if tripod_id == tripod_in_stance:
                action[base] = -stride
            else:
                action[base] = stride
                if jpl >= 2:
                    # nudge off exact quarter boundaries
                    action[base + 1] = lift if half < 0.25 - 1e-9 else -lift

    return action


def rollout(config, damage, task, policy, seed=0, steps=None, gamma=0.99):
    """
    Run policy(obs, config) from reset.

    returns (Trajectory, final SimState)
    """
    steps = config.max_steps if steps is None else steps
    state, obs = reset(config, damage, task, seed)
    transitions = []
    goal_at = None

    for _ in range(steps):
        action = policy(obs, config)
        next_state, reward, done = step(state, action)
        next_obs = observation(next_state)
        transitions.append(Transition(obs, action, reward, next_obs, next_state.succeeded))
        if next_state.succeeded and goal_at is None:
            goal_at = next_state.step_count
        state, obs = next_state, next_obs
        if done:
            break

    traj = Trajectory(tuple(transitions), max_steps=max(steps, 1), goal_reached_at=goal_at)
    return traj, state


def _open_task(variant):
    # threshold out of reach, used to measure baseline returns
    return TaskMode(variant, oracle_threshold=1e300)


def healthy_baseline_distance(config):
    """Forward distance the healthy tripod gait covers in max_steps."""
    _, final = rollout(config, healthy_mask(config), _open_task('x'), tripod_gait_policy)
    return float(final.body_pose[0])


def healthy_baseline_return(config, variant):
    """Return of the healthy tripod gait over max_steps on an open task."""
    traj, _ = rollout(config, healthy_mask(config), _open_task(variant), tripod_gait_policy)
    return float(traj.rewards.sum())


def make_task(
        variant,
        config,
        gamma=0.99,
        oracle_threshold=None,
        threshold_fraction=0.7,
        target=None,
        radius=None,
        ):
    """
    Build a TaskMode with the default oracle threshold.

    x / xy: threshold_fraction of the healthy tripod-gait return.
    p2p:    d0 - radius + bonus / 2, so the threshold is crossed exactly when
            the robot enters the target radius.
    """
    variant = variant.lower()
    if variant not in ('x', 'xy', 'p2p'):
        raise ConfigError(f"unknown task variant '{variant}'")

    if variant != 'p2p':
        if oracle_threshold is None:
            oracle_threshold = threshold_fraction * healthy_baseline_return(config, variant)
        return TaskMode(variant, float(oracle_threshold))

    bonus = goal_value(DiscountSpec(gamma))
    if target is None or radius is None:
        span = healthy_baseline_distance(config)
        target = (0.5 * span, 0.25 * span) if target is None else target
        radius = 0.1 * span if radius is None else radius
    target = (float(target[0]), float(target[1]))
    d0 = math.hypot(*target)
    if d0 <= radius:
        raise ConfigError("p2p target lies inside its own radius at the start")
    if oracle_threshold is None:
        oracle_threshold = d0 - radius + 0.5 * bonus
    return TaskMode('p2p', float(oracle_threshold), target=target,
                    radius=float(radius), terminal_bonus=bonus)


def default_damage(variant, config, seed):
    """
    Damage used by each task protocol: the right-middle leg amputated for x,
    a seeded random leg amputation for xy and p2p.
    """
    if variant == 'x':
        return amputate_leg(healthy_mask(config), min(RIGHT_MIDDLE_LEG, config.num_legs - 1))
    return random_leg_amputation(config, seed)
