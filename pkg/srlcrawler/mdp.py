"""
MDP bookkeeping: transitions, trajectories, discounting and the closed-form
value quantities of a sparse-reward goal task.

Reward convention for goal tasks: transition t earns 1 when s_{t+1} is a goal
state, and a goal state is absorbing with reward 1.  A trajectory that first
reaches the goal after t_g transitions therefore returns
gamma**(t_g - 1) / (1 - gamma).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError


@dataclass(frozen=True, eq=False)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool = False

    def __post_init__(self):
        state = np.asarray(self.state, dtype=float)
        next_state = np.asarray(self.next_state, dtype=float)
        if state.shape != next_state.shape:
            raise DomainError(
                f"state {state.shape} and next_state {next_state.shape} "
                "must have the same dimension")
        if not math.isfinite(self.reward):
            raise DomainError(f"reward must be finite, got {self.reward}")
        object.__setattr__(self, 'state', state)
        object.__setattr__(self, 'next_state', next_state)
        object.__setattr__(self, 'action', np.asarray(self.action, dtype=float))
        object.__setattr__(self, 'reward', float(self.reward))
        object.__setattr__(self, 'terminal', bool(self.terminal))


@dataclass(frozen=True, eq=False)
class Trajectory:
    transitions: tuple = ()
    max_steps: int = 1
    goal_reached_at: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, 'transitions', tuple(self.transitions))
        if self.max_steps < 1:
            raise DomainError(f"max_steps must be positive, got {self.max_steps}")
        if self.goal_reached_at is not None and self.goal_reached_at > self.max_steps:
            raise DomainError(
                f"goal_reached_at={self.goal_reached_at} exceeds "
                f"max_steps={self.max_steps}")

    def __len__(self):
        return len(self.transitions)

    @property
    def is_success(self):
        return self.goal_reached_at is not None

    @property
    def rewards(self):
        return np.array([t.reward for t in self.transitions], dtype=float)

    def states(self):
        """State sequence s_0 .. s_T."""
        if not self.transitions:
            return []
        return [self.transitions[0].state] + [t.next_state for t in self.transitions]


@dataclass(frozen=True)
class DiscountSpec:
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise DomainError(f"gamma must lie in [0, 1), got {self.gamma}")


@dataclass(frozen=True)
class GoalSet:
    goal_predicate: Callable = field(compare=False)
    label: str = 'goal'

    def __call__(self, state):
        return bool(self.goal_predicate(state))


@dataclass(frozen=True)
class Success:
    step: int


@dataclass(frozen=True)
class Failure:
    pass


def _check_gamma(disc):
    # DiscountSpec validates on construction; duck-typed specs may not
    if not 0.0 <= disc.gamma < 1.0:
        raise DomainError(f"gamma must lie in [0, 1), got {disc.gamma}")


def discounted_return(traj, disc):
    """
    Sum of gamma**t * r_t over the trajectory's transitions.
    """
    if len(traj) == 0:
        raise DomainError("discounted return of an empty trajectory")
    _check_gamma(disc)
    rewards = traj.rewards
    discounts = disc.gamma ** np.arange(len(rewards), dtype=float)
    return float(np.dot(discounts, rewards))


def returns_to_go(rewards, disc):
    """
    Discounted return-to-go G_t for every step of a reward sequence.
    """
    _check_gamma(disc)
    rewards = np.asarray(rewards, dtype=float)
    out = np.zeros_like(rewards)
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + disc.gamma * running
        out[t] = running
    return out


def goal_value(disc):
    """Value 1/(1 - gamma) of an absorbing goal state with reward 1."""
    if disc.gamma >= 1.0:
        raise DomainError(f"goal value undefined for gamma={disc.gamma}")
    _check_gamma(disc)
    return 1.0 / (1.0 - disc.gamma)


def success_return(t_g, disc):
    """
    Return of a trajectory first reaching the goal after t_g transitions.
    """
    if t_g < 1:
        raise DomainError(f"t_g must be at least 1, got {t_g}")
    return disc.gamma ** (t_g - 1) * goal_value(disc)


def trajectory_log_probability(
        traj,
        policy_logprob,
        dynamics_logprob,
        initial_logprob,
        ):
    """
    Log density of a trajectory under a policy and dynamics:

        log p(s_0) + sum_t [log pi(a_t|s_t) + log p(s_{t+1}|s_t, a_t)]

    A component of -inf (zero probability) short-circuits to -inf.
    """
    if len(traj) == 0:
        raise DomainError("log probability of an empty trajectory")

    total = float(initial_logprob(traj.transitions[0].state))
    if total == -math.inf:
        return -math.inf

    terms = [total]
    for tr in traj.transitions:
        for term in (policy_logprob(tr.state, tr.action),
                     dynamics_logprob(tr.state, tr.action, tr.next_state)):
            term = float(term)
            if term == -math.inf:
                return -math.inf
            terms.append(term)

    return math.fsum(terms)


def classify_trajectory(traj, goals):
    """
    Success(t) for the first state index t <= max_steps satisfying the goal
    predicate, else Failure.  Index t is the state after t transitions.
    """
    for t, state in enumerate(traj.states()):
        if t > traj.max_steps:
            break
        if goals(state):
            return Success(t)
    return Failure()


def sparse_reward_trajectory(t_g, horizon, state_dim=1):
    """
    Absorbing sparse-reward trajectory: zero reward until the goal is entered
    on transition t_g - 1, reward 1 on every transition from then on.
    """
    if t_g < 1:
        raise DomainError(f"t_g must be at least 1, got {t_g}")
    if horizon < t_g:
        raise DomainError(f"horizon {horizon} shorter than t_g {t_g}")

    transitions = []
    for t in range(horizon):
        in_goal_next = t + 1 >= t_g
        state = np.full(state_dim, float(min(t, t_g)))
        next_state = np.full(state_dim, float(min(t + 1, t_g)))
        transitions.append(Transition(
            state=state,
            action=np.zeros(1),
            reward=1.0 if in_goal_next else 0.0,
            next_state=next_state,
            terminal=in_goal_next))

    return Trajectory(tuple(transitions), max_steps=horizon, goal_reached_at=t_g)


def trajectory_from_steps(
        states: Sequence,
        actions: Sequence,
        rewards: Sequence,
        max_steps: int,
        terminals: Optional[Sequence] = None,
        goal_reached_at: Optional[int] = None,
        ):
    """Build a Trajectory from parallel state/action/reward sequences."""
    if len(states) != len(actions) + 1 or len(actions) != len(rewards):
        raise DomainError("expected len(states) == len(actions) + 1 == len(rewards) + 1")
    if terminals is None:
        terminals = [False] * len(actions)
    transitions = tuple(
        Transition(states[t], actions[t], rewards[t], states[t + 1], terminals[t])
        for t in range(len(actions)))
    return Trajectory(transitions, max_steps=max_steps, goal_reached_at=goal_reached_at)
