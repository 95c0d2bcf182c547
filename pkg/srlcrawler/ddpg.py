"""
DDPG baseline: replay buffer, decaying Gaussian exploration, target
networks and the critic / actor updates.

Every random draw comes from a seeded numpy Generator owned by the
training loop, so a run is reproducible from its seed.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import hexsim
from .errors import DomainError, NonFiniteError, WarmupError
from .bayes_grad import bq_actor_gradient
from .mdp import Transition
from .neuralnet import (Gradients, backward, build_actor, build_critic, forward,
                        gradients_to_vector, make_dropout_mask, make_optimizer, optimize_step,
                        params_from_vector, params_to_vector, scale_gradients)


logger = logging.getLogger(__name__)

# learner stream order; the controller stream is never touched by DDPG
STREAMS = ('actor_init', 'critic_init', 'exploration', 'replay', 'training', 'controller')


@dataclass
class ReplayBuffer:
    capacity: int
    rng_seed: int = 0
    entries: deque = field(init=False, repr=False)
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.capacity < 1:
            raise DomainError(f"buffer capacity must be positive, got {self.capacity}")
        self.entries = deque(maxlen=self.capacity)
        self.rng = np.random.default_rng(self.rng_seed)

    def __len__(self):
        return len(self.entries)


def store(buf, transition):
    """Append; the oldest entry is evicted at capacity."""
    buf.entries.append(transition)
    return buf


def sample_minibatch(buf, n):
    """n uniform draws without replacement from the buffer's own generator."""
    if n < 1:
        raise DomainError(f"minibatch size must be positive, got {n}")
    if len(buf) < n:
        raise WarmupError(f"buffer holds {len(buf)} transitions, minibatch needs {n}")
    picks = buf.rng.choice(len(buf), size=n, replace=False)
    return [buf.entries[i] for i in picks]


@dataclass(frozen=True)
class NoiseSchedule:
    base_variance: float
    decay: float = 0.9999
    t: int = 0

    def variance(self, t=None):
        t = self.t if t is None else t
        return self.base_variance * self.decay ** t

    def advance(self):
        return replace(self, t=self.t + 1)


def explore(action, sched, rng, low=None, high=None):
    """
    Add zero-mean Gaussian noise of the schedule's current variance, clamp
    to the action bounds and advance the schedule clock.

    returns (noisy action, NoiseSchedule)
    """
    rng = np.random.default_rng(rng)
    action = np.asarray(action, dtype=float)
    noisy = action + rng.normal(0.0, np.sqrt(sched.variance()), size=action.shape)
    if low is not None or high is not None:
        noisy = np.clip(noisy, low, high)
    return noisy, sched.advance()


@dataclass(frozen=True, eq=False)
class TargetPair:
    online: object
    target: object
    tau: float = 0.005

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise DomainError(f"tau must lie in (0, 1], got {self.tau}")
        if self.online.shapes() != self.target.shapes():
            raise DomainError("online and target networks differ in shape")


def make_target_pair(params, tau):
    return TargetPair(params, params, tau)


def soft_update(pair):
    """target <- (1 - tau) * target + tau * online"""
    online = params_to_vector(pair.online)
    target = params_to_vector(pair.target)
    blended = (1.0 - pair.tau) * target + pair.tau * online
    return replace(pair, target=params_from_vector(pair.target, blended))


def stack_batch(batch):
    """(states, actions, rewards, next_states, terminals) arrays."""
    states = np.stack([t.state for t in batch])
    actions = np.stack([t.action for t in batch])
    rewards = np.array([t.reward for t in batch], dtype=float)
    next_states = np.stack([t.next_state for t in batch])
    terminals = np.array([t.terminal for t in batch], dtype=bool)
    return states, actions, rewards, next_states, terminals


def _training_mask(params, rng):
    if rng is None or not params.dropout_layers:
        return None
    return make_dropout_mask(params, int(rng.integers(2 ** 32)))


def regression_update(pair, opt, inputs, targets, rng=None):
    """
    One MSE descent step of pair.online toward targets.

    returns (loss, TargetPair, OptimizerState)
    """
    inputs = np.atleast_2d(inputs)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    if len(targets) == 0:
        raise DomainError("regression batch is empty")

    mask = _training_mask(pair.online, rng)
    q = forward(pair.online, inputs, mask)[:, 0]
    error = q - targets
    loss = float(np.mean(error ** 2))
    if not np.isfinite(loss):
        raise NonFiniteError(
            "non-finite critic loss",
            diagnostics={
                'batch_size': len(targets),
                'max_abs_target': float(np.nanmax(np.abs(targets))),
                'max_abs_q': float(np.nanmax(np.abs(q))),
                })

    upstream = (2.0 / len(targets)) * error[:, None]
    grads = backward(pair.online, inputs, upstream, mask)
    online, opt = optimize_step(pair.online, grads, opt)
    return loss, replace(pair, online=online), opt


def td_targets(critic_target, actor_target, rewards, next_states, terminals, gamma):
    """y = r + gamma * Q'(s', pi'(s')), with y = r on terminal transitions."""
    next_actions = forward(actor_target, next_states)
    next_q = forward(critic_target, np.hstack([next_states, next_actions]))[:, 0]
    return rewards + gamma * np.where(terminals, 0.0, next_q)


def critic_update(pair, actor_target, batch, gamma, opt, rng=None):
    """
    Minimize mean squared TD error of the online critic.

    returns (loss, TargetPair, OptimizerState)
    """
    if not batch:
        raise DomainError("critic update on an empty batch")
    states, actions, rewards, next_states, terminals = stack_batch(batch)
    targets = td_targets(pair.target, actor_target, rewards, next_states, terminals, gamma)
    return regression_update(pair, opt, np.hstack([states, actions]), targets, rng)


def actor_objective_gradient(actor, critic, states):
    """
    Mean Q(s, pi(s)) over states and its exact gradient with respect to
    the actor parameters.

    returns (objective, Gradients)
    """
    states = np.atleast_2d(states)
    n = states.shape[0]
    actions = forward(actor, states)
    inputs = np.hstack([states, actions])
    objective = float(np.mean(forward(critic, inputs)[:, 0]))

    critic_grads = backward(critic, inputs, np.full((n, 1), 1.0 / n))
    dq_da = critic_grads.input_grad[:, states.shape[1]:]
    return objective, backward(actor, states, dq_da)


def actor_update(pair, critic, batch, opt):
    """
    Deterministic policy-gradient ascent on mean Q(s, pi(s)).

    returns (TargetPair, OptimizerState, objective)
    """
    if not batch:
        raise DomainError("actor update on an empty batch")
    states = np.stack([t.state for t in batch])
    objective, grads = actor_objective_gradient(pair.online, critic, states)
    if not np.all(np.isfinite(gradients_to_vector(grads))):
        raise NonFiniteError("non-finite actor gradient")
    online, opt = optimize_step(pair.online, scale_gradients(grads, -1.0), opt)
    return replace(pair, online=online), opt, objective


@dataclass
class Learner:
    """Networks, optimizers, buffer, noise clock and seeded streams of one run."""
    actor: TargetPair
    critic: TargetPair
    actor_opt: object
    critic_opt: object
    buffer: ReplayBuffer
    noise: NoiseSchedule
    action_bound: float
    gamma: float
    minibatch_size: int
    exploration_rng: np.random.Generator
    training_rng: np.random.Generator
    controller_seed: int
    noise_per_episode: bool = False
    actor_gradient: str = 'dpg'
    last_critic_loss: Optional[float] = None
    last_actor_objective: Optional[float] = None


def spawn_seeds(seed):
    """Named child seeds for every stream of a run."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: int(child.generate_state(1)[0]) for name, child in zip(STREAMS, children)}


def build_learner(obs_dim, act_dim, action_bound, settings, seed):
    """
    settings keys: hidden_widths, dropout_rate, buffer_size, minibatch_size,
    actor_lr, critic_lr, actor_optimizer, critic_optimizer, tau, gamma,
    base_variance, noise_decay, noise_per_episode
    """
    seeds = spawn_seeds(seed)
    actor = build_actor(obs_dim, act_dim, settings['hidden_widths'], action_bound,
                        seed=seeds['actor_init'], dropout_rate=settings['dropout_rate'])
    critic = build_critic(obs_dim, act_dim, settings['hidden_widths'],
                          seed=seeds['critic_init'], dropout_rate=settings['dropout_rate'])

    return Learner(
        actor=make_target_pair(actor, settings['tau']),
        critic=make_target_pair(critic, settings['tau']),
        actor_opt=make_optimizer(settings['actor_optimizer'], actor, settings['actor_lr']),
        critic_opt=make_optimizer(settings['critic_optimizer'], critic, settings['critic_lr']),
        buffer=ReplayBuffer(settings['buffer_size'], seeds['replay']),
        noise=NoiseSchedule(settings['base_variance'], settings['noise_decay']),
        action_bound=action_bound,
        gamma=settings['gamma'],
        minibatch_size=settings['minibatch_size'],
        exploration_rng=np.random.default_rng(seeds['exploration']),
        training_rng=np.random.default_rng(seeds['training']),
        controller_seed=seeds['controller'],
        noise_per_episode=settings.get('noise_per_episode', False),
        actor_gradient=settings.get('actor_gradient', 'dpg'))


def learn(learner):
    """
    One update block: critic, actor, soft targets.  No-op while the buffer
    is warming up.

    returns the critic loss, or None during warmup
    """
    if len(learner.buffer) < learner.minibatch_size:
        return None

    batch = sample_minibatch(learner.buffer, learner.minibatch_size)
    loss, learner.critic, learner.critic_opt = critic_update(
        learner.critic, learner.actor.target, batch, learner.gamma,
        learner.critic_opt, learner.training_rng)
    objective = None
    if learner.actor_gradient == 'dpg':
        learner.actor, learner.actor_opt, objective = actor_update(
            learner.actor, learner.critic.online, batch, learner.actor_opt)
    learner.critic = soft_update(learner.critic)
    learner.actor = soft_update(learner.actor)

    learner.last_critic_loss = loss
    learner.last_actor_objective = objective
    return loss


def noisy_action(learner, action):
    """Exploration noise on an emitted action; advances the per-step clock."""
    noisy, advanced = explore(action, learner.noise, learner.exploration_rng,
                              -learner.action_bound, learner.action_bound)
    if not learner.noise_per_episode:
        learner.noise = advanced
    return noisy


def end_episode(learner):
    if learner.noise_per_episode:
        learner.noise = learner.noise.advance()


def bq_actor_update(learner, episodes, disc):
    """
    Episodic actor step from the Bayesian-quadrature gradient over a window
    of (states, actions, rewards) episodes; replaces the DPG actor step when
    actor_gradient is 'bq'.

    returns the GradientEstimate used
    """
    estimate = bq_actor_gradient(learner.actor.online, episodes,
                                 learner.noise.variance(), disc)
    # optimizers descend, the estimate points uphill
    ascent = params_from_vector(learner.actor.online, -estimate.mean)
    grads = Gradients(tuple((layer.weights, layer.biases) for layer in ascent.layers))
    online, learner.actor_opt = optimize_step(learner.actor.online, grads, learner.actor_opt)
    learner.actor = replace(learner.actor, online=online)
    return estimate


def env_transition(state, action):
    """Step the simulator and package the transition."""
    obs = hexsim.observation(state)
    next_state, reward, done = hexsim.step(state, action)
    transition = Transition(obs, action, reward, hexsim.observation(next_state),
                            next_state.succeeded)
    return transition, next_state, done


def ddpg_step(state, learner, train=True):
    """
    Act with the online actor plus exploration noise, step, store, learn.

    returns (action, Transition, next SimState, done)
    """
    obs = hexsim.observation(state)
    action = forward(learner.actor.online, obs)
    if train:
        action = noisy_action(learner, action)
    transition, next_state, done = env_transition(state, action)
    if train:
        store(learner.buffer, transition)
        learn(learner)
    return action, transition, next_state, done
