"""
SRL controller: the healthy-gait behavior policy and the learning target
policy both propose an action, the dropout critic's posterior picks one by
Thompson sampling, and an improvement-probability gate decides whether the
pick is accepted or the agent falls back to its own actor.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace
from typing import FrozenSet, Optional

import numpy as np

from . import ddpg, hexsim
from .errors import ContractViolation, DomainError
from .mdp import returns_to_go
from .neuralnet import dropout_mask_seeds, forward, make_dropout_mask


logger = logging.getLogger(__name__)


class Decision(enum.Enum):
    ACCEPT = 'accept'
    FALLBACK = 'fallback'


@dataclass(frozen=True, eq=False)
class ActionProposalSet:
    target_action: np.ndarray
    behavior_action: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.behavior_action is not None
                and np.shape(self.behavior_action) != np.shape(self.target_action)):
            raise DomainError("target and behavior proposals differ in dimension")

    def candidates(self):
        """(source, action) pairs; the target proposal comes first."""
        out = [('target', self.target_action)]
        if self.behavior_action is not None:
            out.append(('behavior', self.behavior_action))
        return out


@dataclass(frozen=True, eq=False)
class PreviousSelection:
    action: np.ndarray
    q_samples: np.ndarray


@dataclass(frozen=True, eq=False)
class ControllerState:
    rng_seed: int
    prev_selection: Optional[PreviousSelection] = None
    accept_count: int = 0
    fallback_count: int = 0
    draws: int = 0

    @property
    def accept_fraction(self):
        total = self.accept_count + self.fallback_count
        return self.accept_count / total if total else 0.0


@dataclass(frozen=True)
class ControllerSettings:
    threshold: float = 0.5
    n_samples: int = 16
    behavior_enabled: bool = True
    value_update_on_fallback: bool = True

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise DomainError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.n_samples < 1:
            raise DomainError("n_samples must be at least 1")


@dataclass(frozen=True, eq=False)
class ThompsonSelection:
    action: np.ndarray
    source: str
    q_samples: np.ndarray
    extra_q_samples: np.ndarray


@dataclass(frozen=True)
class GuidanceReport:
    guided_states: FrozenSet[int]
    total_states: int

    @property
    def guided_fraction(self):
        return len(self.guided_states) / self.total_states if self.total_states else 0.0


@dataclass(frozen=True)
class DecisionRecord:
    step: int
    p_a: float
    decision: str
    selected_source: str
    q_mean_curr: float
    q_mean_prev: float


def new_controller(seed):
    return ControllerState(rng_seed=int(seed))


def start_episode(state):
    """Forget the previous selection at an episode boundary."""
    return replace(state, prev_selection=None)


def propose(obs, actor, behavior=None, config=None, action_bound=None):
    """
    Evaluate the target actor and, when given, the behavior policy on obs.
    Proposals are clamped to +-action_bound.
    """
    target = forward(actor, obs)
    behavior_action = None
    if behavior is not None:
        behavior_action = np.asarray(behavior(obs, config), dtype=float)
    if action_bound is not None:
        target = np.clip(target, -action_bound, action_bound)
        if behavior_action is not None:
            behavior_action = np.clip(behavior_action, -action_bound, action_bound)
    return ActionProposalSet(target, behavior_action)


def thompson_pick(q_matrix):
    """
    Index of the candidate with the highest value in the first posterior
    draw.  q_matrix has one row per draw, one column per candidate.
    """
    q_matrix = np.atleast_2d(q_matrix)
    return int(np.argmax(q_matrix[0]))


def posterior_q_matrix(critic, obs, actions, n_samples, seed):
    """
    Q(obs, a) for every action under n_samples dropout masks; one mask per
    draw is shared by all actions.
    """
    if not critic.dropout_layers:
        raise ContractViolation("critic has no dropout layer; Q-posterior undefined")
    actions = np.atleast_2d(actions)
    inputs = np.hstack([np.tile(obs, (len(actions), 1)), actions])
    rows = []
    for mask_seed in dropout_mask_seeds(seed, n_samples):
        mask = make_dropout_mask(critic, mask_seed)
        rows.append(forward(critic, inputs, mask)[:, 0])
    return np.array(rows)


def thompson_select(critic, obs, proposals, n_samples, seed, extra_actions=()):
    """
    Thompson selection between proposals.  Extra actions are evaluated under
    the same masks (for p_a) but never selected.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be at least 1")
    candidates = proposals.candidates()
    actions = [a for _, a in candidates] + [np.asarray(a, dtype=float) for a in extra_actions]
    q = posterior_q_matrix(critic, obs, np.stack(actions), n_samples, seed)

    n_candidates = len(candidates)
    pick = thompson_pick(q[:, :n_candidates])
    source, action = candidates[pick]
    return ThompsonSelection(action, source, q[:, pick].copy(), q[:, n_candidates:].copy())


def improvement_probability(curr_q_samples, prev_q_samples):
    """
    Fraction of index-paired draws where the current value strictly exceeds
    the previous one; lists are truncated to the shorter length.
    """
    curr = np.asarray(curr_q_samples, dtype=float).reshape(-1)
    prev = np.asarray(prev_q_samples, dtype=float).reshape(-1)
    if curr.size == 0 or prev.size == 0:
        raise DomainError("improvement probability needs non-empty sample lists")
    n = min(curr.size, prev.size)
    return float(np.mean(curr[:n] > prev[:n]))


def controller_decide(p_a, state, threshold=0.5):
    """
    Accept the Thompson pick when p_a > threshold, otherwise fall back.

    returns (Decision, ControllerState)
    """
    if not 0.0 < threshold < 1.0:
        raise DomainError(f"threshold must lie in (0, 1), got {threshold}")
    if p_a > threshold:
        return Decision.ACCEPT, replace(state, accept_count=state.accept_count + 1)
    return Decision.FALLBACK, replace(state, fallback_count=state.fallback_count + 1)


def _draw_seed(state):
    return int(np.random.SeedSequence([state.rng_seed, state.draws]).generate_state(1)[0])


def choose_action(obs, learner, controller, settings, config):
    """
    propose -> thompson_select -> improvement_probability -> controller_decide

    returns (action before exploration noise, ControllerState, DecisionRecord
    without the step index, whether the controller fell back)
    """
    behavior = hexsim.tripod_gait_policy if settings.behavior_enabled else None
    proposals = propose(obs, learner.actor.online, behavior, config, learner.action_bound)

    prev = controller.prev_selection
    extras = () if prev is None else (prev.action,)
    selection = thompson_select(learner.critic.online, obs, proposals,
                                settings.n_samples, _draw_seed(controller), extras)

    if prev is None:
        # nothing to compare against on the first step
        p_a = 1.0
        q_prev = float('nan')
    else:
        prev_samples = selection.extra_q_samples[:, 0]
        p_a = improvement_probability(selection.q_samples, prev_samples)
        q_prev = float(np.mean(prev_samples))

    decision, controller = controller_decide(p_a, controller, settings.threshold)

    if decision is Decision.ACCEPT:
        action, source = selection.action, selection.source
    else:
        action, source = proposals.target_action, 'target'
        logger.debug("fallback to target action (p_a=%.3f, pick was %s)", p_a, selection.source)

    controller = replace(
        controller,
        prev_selection=PreviousSelection(selection.action, selection.q_samples),
        draws=controller.draws + 1)

    record = DecisionRecord(
        step=-1,
        p_a=p_a,
        decision=decision.value,
        selected_source=source,
        q_mean_curr=float(np.mean(selection.q_samples)),
        q_mean_prev=q_prev)

    return action, controller, record, decision is Decision.FALLBACK


def srl_policy_action(obs, learner, controller, settings, config):
    """
    The composed controller as a fixed policy: no exploration noise and no
    learning.

    returns (action, ControllerState)
    """
    action, controller, _, _ = choose_action(obs, learner, controller, settings, config)
    return action, controller


def srl_step(state, learner, controller, settings, train=True):
    """
    One SRL step: choose, explore, step the simulator, store and learn.
    With train=False no noise is added and nothing is learned.

    returns (action, Transition, next SimState, done, ControllerState,
    DecisionRecord, fallback flag)
    """
    obs = hexsim.observation(state)
    base_action, controller, record, fell_back = choose_action(
        obs, learner, controller, settings, state.config)
    record = replace(record, step=state.step_count)

    action = ddpg.noisy_action(learner, base_action) if train else base_action
    transition, next_state, done = ddpg.env_transition(state, action)

    if train:
        ddpg.store(learner.buffer, transition)
        ddpg.learn(learner)

    fallback = fell_back and settings.value_update_on_fallback
    return action, transition, next_state, done, controller, record, fallback


def hindsight_value_update(learner, observations, actions, rewards, fallback_steps, disc):
    """
    Regress Q(s_t, a_t) toward the observed discounted return-to-go G_t for
    every step where the controller fell back.  Runs at episode end, once
    G_t is known.

    returns the regression loss, or None when there was no fallback
    """
    if len(fallback_steps) == 0:
        return None
    idx = np.asarray(fallback_steps, dtype=int)
    g = returns_to_go(rewards, disc)
    inputs = np.hstack([np.asarray(observations)[idx], np.asarray(actions)[idx]])
    loss, learner.critic, learner.critic_opt = ddpg.regression_update(
        learner.critic, learner.critic_opt, inputs, g[idx], learner.training_rng)
    return loss


def partial_guidance_report(value_fn, behavior, config, sample_states):
    """
    Flag the sample states where one behavior-policy step strictly increases
    value_fn.  value_fn maps a SimState to a real.
    """
    guided = set()
    for index, state in enumerate(sample_states):
        action = behavior(hexsim.observation(state), config)
        next_state, _, _ = hexsim.step(state, action)
        if value_fn(next_state) > value_fn(state):
            guided.add(index)
    return GuidanceReport(frozenset(guided), len(sample_states))
