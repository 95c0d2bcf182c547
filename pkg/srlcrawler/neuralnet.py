"""
Feedforward networks for the actor and the Bayesian-dropout critic:
exact reverse-mode gradients, MC-dropout posterior sampling, ADAM and
RMSProp updates.

Weights are stored (fan_in, fan_out) so a row batch X maps to X @ W + b.
A layer with a dropout rate masks its output activations; masks carry a
1 / keep_rate rescaling so the masked network is unbiased.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import ContractViolation, DomainError, NonFiniteError


logger = logging.getLogger(__name__)

ACTIVATIONS = ('relu', 'tanh', 'identity')
ADAM_DEFAULTS = {'beta1': 0.9, 'beta2': 0.999, 'eps': 1e-8}
RMSPROP_DEFAULTS = {'decay': 0.99, 'eps': 1e-8}


@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: str = 'relu'
    dropout_rate: Optional[float] = None

    def __post_init__(self):
        if self.width < 1:
            raise DomainError(f"layer width must be positive, got {self.width}")
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"unknown activation '{self.activation}'")
        if self.dropout_rate is not None and not 0.0 <= self.dropout_rate < 1.0:
            raise DomainError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")

    @property
    def has_dropout(self):
        return self.dropout_rate is not None


@dataclass(frozen=True, eq=False)
class Layer:
    weights: np.ndarray
    biases: np.ndarray
    spec: LayerSpec


@dataclass(frozen=True, eq=False)
class NetworkParams:
    layers: Tuple[Layer, ...]
    role: str = 'critic'
    output_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, 'layers', tuple(self.layers))
        if self.role not in ('actor', 'critic'):
            raise DomainError(f"role must be 'actor' or 'critic', got '{self.role}'")
        if not self.layers:
            raise DomainError("a network needs at least one layer")
        for index, layer in enumerate(self.layers):
            w, b = layer.weights, layer.biases
            if w.ndim != 2 or b.shape != (w.shape[1],) or w.shape[1] != layer.spec.width:
                raise DomainError(f"layer {index}: weights {w.shape} / biases {b.shape} "
                                  f"inconsistent with width {layer.spec.width}")
            if index and self.layers[index - 1].weights.shape[1] != w.shape[0]:
                raise DomainError(f"layer {index} expects {w.shape[0]} inputs, "
                                  f"previous layer emits {self.layers[index - 1].weights.shape[1]}")

    @property
    def input_dim(self):
        return self.layers[0].weights.shape[0]

    @property
    def output_dim(self):
        return self.layers[-1].weights.shape[1]

    @property
    def dropout_layers(self):
        return [i for i, layer in enumerate(self.layers) if layer.spec.has_dropout]

    def shapes(self):
        return [(layer.weights.shape, layer.biases.shape) for layer in self.layers]


@dataclass(frozen=True, eq=False)
class DropoutMask:
    keep: Dict[int, np.ndarray]
    seed: int


@dataclass(frozen=True, eq=False)
class Gradients:
    layers: Tuple[Tuple[np.ndarray, np.ndarray], ...]
    input_grad: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class OptimizerState:
    variant: str
    learning_rate: float
    step_count: int = 0
    first_moment: Optional[np.ndarray] = None
    second_moment: Optional[np.ndarray] = None
    hyper: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in ('adam', 'rmsprop'):
            raise DomainError(f"unknown optimizer '{self.variant}'")
        if not self.learning_rate > 0:
            raise DomainError(f"learning_rate must be positive, got {self.learning_rate}")


def _activate(z, activation):
    if activation == 'relu':
        return np.maximum(z, 0.0)
    if activation == 'tanh':
        return np.tanh(z)
    return z


def _activation_slope(z, a, activation):
    if activation == 'relu':
        return (z > 0).astype(float)
    if activation == 'tanh':
        return 1.0 - a * a
    return np.ones_like(z)


def init_network(input_dim, layer_specs, role='critic', seed=0, output_scale=1.0):
    """Uniform +-1/sqrt(fan_in) initialization from a seeded generator."""
    rng = np.random.default_rng(seed)
    layers = []
    fan_in = input_dim
    for spec in layer_specs:
        bound = 1.0 / np.sqrt(fan_in)
        weights = rng.uniform(-bound, bound, size=(fan_in, spec.width))
        biases = rng.uniform(-bound, bound, size=spec.width)
        layers.append(Layer(weights, biases, spec))
        fan_in = spec.width
    return NetworkParams(tuple(layers), role=role, output_scale=output_scale)


def _hidden_specs(hidden_widths, dropout_rate):
    specs = [LayerSpec(w, 'relu') for w in hidden_widths]
    if specs and dropout_rate is not None:
        # single Bayesian dropout layer ahead of the output layer
        specs[-1] = LayerSpec(specs[-1].width, 'relu', dropout_rate)
    return specs


def build_actor(obs_dim, act_dim, hidden_widths, action_bound, seed=0, dropout_rate=0.1):
    """Tanh-output actor scaled to +-action_bound."""
    specs = _hidden_specs(hidden_widths, dropout_rate) + [LayerSpec(act_dim, 'tanh')]
    return init_network(obs_dim, specs, role='actor', seed=seed, output_scale=action_bound)


def build_critic(obs_dim, act_dim, hidden_widths, seed=0, dropout_rate=0.1):
    """Q(s, a) network over the concatenated state-action vector."""
    specs = _hidden_specs(hidden_widths, dropout_rate) + [LayerSpec(1, 'identity')]
    return init_network(obs_dim + act_dim, specs, role='critic', seed=seed)


def make_dropout_mask(params, seed):
    """Bernoulli keep flags for every dropout layer, regenerable from seed."""
    rng = np.random.default_rng(seed)
    keep = {}
    for index in params.dropout_layers:
        spec = params.layers[index].spec
        keep[index] = rng.random(spec.width) >= spec.dropout_rate
    return DropoutMask(keep, int(seed))


def dropout_mask_seeds(seed, n):
    """n independent mask seeds derived from one seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def _as_batch(x, expected, what):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != expected:
        raise DomainError(f"{what} has shape {x.shape}, expected trailing dimension {expected}")
    return batch, single


def _forward_cache(params, batch, mask):
    activations = [batch]
    pre_activations = []
    a = batch
    for index, layer in enumerate(params.layers):
        z = a @ layer.weights + layer.biases
        a = _activate(z, layer.spec.activation)
        if mask is not None and index in mask.keep:
            keep_rate = 1.0 - layer.spec.dropout_rate
            a = a * (mask.keep[index] / keep_rate)
        pre_activations.append(z)
        activations.append(a)
    return pre_activations, activations


def forward(params, x, mask=None):
    """
    Affine + activation composition, with dropout applied when a mask is
    given.  A row batch shares the mask.
    """
    batch, single = _as_batch(x, params.input_dim, 'input')
    _, activations = _forward_cache(params, batch, mask)
    out = activations[-1] * params.output_scale
    return out[0] if single else out


def backward(params, x, upstream, mask=None):
    """
    Exact gradients of sum(output * upstream) with respect to every weight,
    bias and the input.  For a batch, parameter gradients are summed over
    rows and input_grad keeps one row per sample.
    """
    batch, single = _as_batch(x, params.input_dim, 'input')
    up, _ = _as_batch(upstream, params.output_dim, 'upstream')
    if up.shape[0] != batch.shape[0]:
        raise DomainError(f"upstream batch {up.shape[0]} does not match input batch {batch.shape[0]}")

    pre_activations, activations = _forward_cache(params, batch, mask)

    delta = up * params.output_scale
    grads = [None] * len(params.layers)
    for index in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[index]
        if mask is not None and index in mask.keep:
            keep_rate = 1.0 - layer.spec.dropout_rate
            delta = delta * (mask.keep[index] / keep_rate)
        # activations[index + 1] is post-mask; slope needs the raw activation
        raw = _activate(pre_activations[index], layer.spec.activation)
        delta = delta * _activation_slope(pre_activations[index], raw, layer.spec.activation)
        grads[index] = (activations[index].T @ delta, delta.sum(axis=0))
        delta = delta @ layer.weights.T

    input_grad = delta[0] if single else delta
    return Gradients(tuple(grads), input_grad)


def mc_dropout_q_samples(critic, state, action, n, seed):
    """
    n critic evaluations of Q(state, action) under independently seeded
    dropout masks: the empirical Q-posterior sample set.
    """
    if n < 1:
        raise DomainError(f"need at least one posterior sample, got n={n}")
    if not critic.dropout_layers:
        raise ContractViolation("critic has no dropout layer; Q-posterior undefined")

    x = np.concatenate([np.asarray(state, dtype=float), np.asarray(action, dtype=float)])
    samples = []
    for mask_seed in dropout_mask_seeds(seed, n):
        mask = make_dropout_mask(critic, mask_seed)
        samples.append(float(forward(critic, x, mask)[0]))
    return samples


def params_to_vector(params):
    return np.concatenate(
        [np.concatenate([layer.weights.ravel(), layer.biases]) for layer in params.layers])


def gradients_to_vector(grads):
    return np.concatenate([np.concatenate([dw.ravel(), db]) for dw, db in grads.layers])


def params_from_vector(params, vector):
    """Same topology as params, entries taken from vector."""
    vector = np.asarray(vector, dtype=float)
    layers = []
    offset = 0
    for layer in params.layers:
        n_w = layer.weights.size
        n_b = layer.biases.size
        weights = vector[offset:offset + n_w].reshape(layer.weights.shape).copy()
        offset += n_w
        biases = vector[offset:offset + n_b].copy()
        offset += n_b
        layers.append(Layer(weights, biases, layer.spec))
    if offset != vector.size:
        raise DomainError(f"vector has {vector.size} entries, network needs {offset}")
    return replace(params, layers=tuple(layers))


def scale_gradients(grads, factor):
    return Gradients(tuple((dw * factor, db * factor) for dw, db in grads.layers),
                     None if grads.input_grad is None else grads.input_grad * factor)


def make_optimizer(variant, params, learning_rate, **hyper):
    """Fresh optimizer state sized for params."""
    variant = variant.lower()
    defaults = dict(ADAM_DEFAULTS if variant == 'adam' else RMSPROP_DEFAULTS)
    defaults.update(hyper)
    size = params_to_vector(params).size
    return OptimizerState(
        variant=variant,
        learning_rate=learning_rate,
        step_count=0,
        first_moment=np.zeros(size) if variant == 'adam' else None,
        second_moment=np.zeros(size),
        hyper=defaults)


def optimize_step(params, grads, opt):
    """
    One descent step: params - learning_rate * update(grads).

    returns (NetworkParams, OptimizerState)
    """
    if len(grads.layers) != len(params.layers):
        raise DomainError("gradient and parameter layer counts differ")
    for index, ((dw, db), layer) in enumerate(zip(grads.layers, params.layers)):
        if dw.shape != layer.weights.shape or db.shape != layer.biases.shape:
            raise DomainError(f"layer {index}: gradient shapes do not match parameters")
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise NonFiniteError(f"non-finite gradient in layer {index}", layer_index=index)

    g = gradients_to_vector(grads)
    theta = params_to_vector(params)
    t = opt.step_count + 1
    hyper = opt.hyper

    if opt.variant == 'adam':
        m = hyper['beta1'] * opt.first_moment + (1 - hyper['beta1']) * g
        v = hyper['beta2'] * opt.second_moment + (1 - hyper['beta2']) * g * g
        m_hat = m / (1 - hyper['beta1'] ** t)
        v_hat = v / (1 - hyper['beta2'] ** t)
        theta = theta - opt.learning_rate * m_hat / (np.sqrt(v_hat) + hyper['eps'])
        new_opt = replace(opt, step_count=t, first_moment=m, second_moment=v)
    else:
        s = hyper['decay'] * opt.second_moment + (1 - hyper['decay']) * g * g
        theta = theta - opt.learning_rate * g / (np.sqrt(s) + hyper['eps'])
        new_opt = replace(opt, step_count=t, second_moment=s)

    return params_from_vector(params, theta), new_opt
