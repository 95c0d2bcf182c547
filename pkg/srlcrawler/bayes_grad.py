"""
Policy-gradient estimators: the Monte-Carlo likelihood-ratio estimator and
the Gaussian-process Bayesian-quadrature posterior gradient, plus the GP
regression machinery they share.

The quadrature integral runs over trajectory space.  It is evaluated
against a discrete measure: by default the empirical measure of the sampled
trajectories (weights 1/M), or any set of nodes with known probabilities.
With the empirical measure and a noise-free GP the posterior mean equals
the Monte-Carlo estimate on the same samples.
"""
from __future__ import annotations

import logging
import pathlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import pandas as pd
from scipy import linalg

from .errors import DomainError, NotPositiveDefiniteError
from .mdp import Trajectory, Transition, discounted_return
from .neuralnet import backward, forward, gradients_to_vector


logger = logging.getLogger(__name__)

DEFAULT_JITTER = 1e-9
VARIANCE_STUDY_COLUMNS = ['estimator', 'M', 'seed', 'component_index', 'estimate', 'analytic_truth']


@dataclass(frozen=True)
class SquaredExponential:
    lengthscale: float = 1.0
    signal_variance: float = 1.0

    def __post_init__(self):
        if self.lengthscale <= 0 or self.signal_variance <= 0:
            raise DomainError("kernel lengthscale and signal variance must be positive")

    def __call__(self, a, b):
        a = np.atleast_2d(a)
        b = np.atleast_2d(b)
        sq = (np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
              - 2.0 * a @ b.T)
        sq = np.maximum(sq, 0.0)
        return self.signal_variance * np.exp(-0.5 * sq / self.lengthscale ** 2)


@dataclass(frozen=True, eq=False)
class GPModel:
    kernel: SquaredExponential
    noise_variance: float
    inputs: np.ndarray
    values: np.ndarray
    factor: tuple = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    jitter: float = 0.0

    @property
    def size(self):
        return len(self.values)


@dataclass(frozen=True, eq=False)
class ScoreFunction:
    """Policy parameters theta and the evaluator (s, a, theta) -> grad log pi(a|s)."""
    theta: np.ndarray
    grad_log_prob: Callable

    def __call__(self, state, action):
        return np.asarray(self.grad_log_prob(state, action, self.theta), dtype=float)

    def trajectory_score(self, traj):
        return np.sum([self(t.state, t.action) for t in traj.transitions], axis=0)


@dataclass(frozen=True, eq=False)
class GradientEstimate:
    mean: np.ndarray
    covariance: Optional[np.ndarray] = None
    variance: Optional[np.ndarray] = None


def median_lengthscale(inputs):
    """Median pairwise distance, 1.0 when every input coincides."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if len(inputs) < 2:
        return 1.0
    diffs = inputs[:, None, :] - inputs[None, :, :]
    distances = np.sqrt(np.sum(diffs ** 2, axis=-1))[np.triu_indices(len(inputs), k=1)]
    distances = distances[distances > 0]
    return float(np.median(distances)) if distances.size else 1.0


def _factorize(matrix):
    return linalg.cho_factor(matrix, lower=True, check_finite=True)


def gp_fit(inputs, values, kernel, noise_variance=0.0, jitter=DEFAULT_JITTER):
    """
    Condition a zero-mean GP on (inputs, values).

    The kernel matrix K + noise * I is factorized by Cholesky; jitter is
    added to the diagonal only if that first factorization fails.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    values = np.asarray(values, dtype=float).reshape(-1)
    if len(values) < 1:
        raise DomainError("GP fit needs at least one observation")
    if inputs.shape[0] != len(values):
        raise DomainError(f"{inputs.shape[0]} inputs but {len(values)} values")
    if noise_variance < 0:
        raise DomainError("noise_variance must be nonnegative")
    if noise_variance == 0 and len(np.unique(inputs, axis=0)) < len(inputs):
        raise DomainError("duplicate inputs with zero noise make the kernel matrix singular")

    system = kernel(inputs, inputs) + noise_variance * np.eye(len(values))
    used_jitter = 0.0
    try:
        factor = _factorize(system)
    except np.linalg.LinAlgError:
        used_jitter = jitter
        logger.debug("kernel matrix not positive definite, retrying with jitter %g", jitter)
        try:
            factor = _factorize(system + jitter * np.eye(len(values)))
        except np.linalg.LinAlgError as err:
            raise NotPositiveDefiniteError(
                f"kernel matrix not positive definite even with jitter {jitter:g}; "
                "increase jitter or noise_variance") from err

    alpha = linalg.cho_solve(factor, values)
    return GPModel(kernel, float(noise_variance), inputs, values, factor, alpha, used_jitter)


def gp_posterior_batch(model, queries):
    """Posterior means and variances at each query row."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if queries.shape[1] != model.inputs.shape[1]:
        raise DomainError(
            f"query dimension {queries.shape[1]} does not match {model.inputs.shape[1]}")
    cross = model.kernel(model.inputs, queries)
    mean = cross.T @ model.alpha
    lower = model.factor[0]
    v = linalg.solve_triangular(lower, cross, lower=True, check_finite=False)
    prior = np.full(len(queries), model.kernel.signal_variance)
    variance = np.maximum(prior - np.sum(v * v, axis=0), 0.0)
    return mean, variance


def gp_posterior(model, x):
    """
    returns (mean, variance) of the GP at x
    """
    mean, variance = gp_posterior_batch(model, np.asarray(x, dtype=float).reshape(1, -1))
    return float(mean[0]), float(variance[0])


def gp_posterior_covariance(model, queries):
    """Joint posterior covariance over query rows."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    cross = model.kernel(model.inputs, queries)
    v = linalg.solve_triangular(model.factor[0], cross, lower=True, check_finite=False)
    return model.kernel(queries, queries) - v.T @ v


def mc_gradient_from_terms(returns, score_sums):
    """
    (1/M) sum_i J_i * u_i with per-component sample variance / M.
    """
    returns = np.asarray(returns, dtype=float).reshape(-1)
    score_sums = np.atleast_2d(np.asarray(score_sums, dtype=float))
    m = len(returns)
    if m < 1:
        raise DomainError("Monte-Carlo gradient needs at least one trajectory")
    if score_sums.shape[0] != m:
        raise DomainError(f"{m} returns but {score_sums.shape[0]} score vectors")
    terms = returns[:, None] * score_sums
    mean = terms.mean(axis=0)
    variance = terms.var(axis=0, ddof=1) / m if m > 1 else np.zeros_like(mean)
    return GradientEstimate(mean=mean, covariance=None, variance=variance)


def _trajectory_return(traj, disc):
    if disc is None:
        if len(traj) == 0:
            raise DomainError("return of an empty trajectory")
        return float(traj.rewards.sum())
    return discounted_return(traj, disc)


def mc_policy_gradient(trajectories, score, disc=None):
    """
    Likelihood-ratio estimate (1/M) sum_i J(xi_i) sum_t grad log pi(a_t|s_t).

    J is the discounted return under disc, the plain reward sum when disc
    is None.
    """
    if not trajectories:
        raise DomainError("Monte-Carlo gradient needs at least one trajectory")
    returns = [_trajectory_return(traj, disc) for traj in trajectories]
    scores = np.stack([score.trajectory_score(traj) for traj in trajectories])
    return mc_gradient_from_terms(returns, scores)


def trajectory_features(rewards, score_vector, disc=None, include_return=True):
    """
    GP input for a trajectory with the given reward sequence: its score
    vector, optionally followed by the mean return-to-go over its steps.
    """
    parts = [np.asarray(score_vector, dtype=float).reshape(-1)]
    if include_return:
        rewards = np.asarray(rewards, dtype=float)
        gamma = 1.0 if disc is None else disc.gamma
        to_go = [np.dot(gamma ** np.arange(len(rewards) - t), rewards[t:])
                 for t in range(len(rewards))]
        parts.append(np.array([np.mean(to_go) if to_go else 0.0]))
    return np.concatenate(parts)


def bq_posterior_gradient(model, score_vectors, nodes=None, weights=None, full_covariance=True):
    """
    Posterior over grad eta = integral J(xi) grad log P(xi) P(xi) dxi with a
    GP prior on J.

    The integral is taken against a discrete measure: nodes (GP inputs) with
    their score vectors and weights.  Leaving nodes and weights out uses the
    empirical measure of the fitted samples, score_vectors then being the
    per-sample scores.

    returns GradientEstimate with posterior mean and covariance; with
    full_covariance=False only the per-component variance is formed
    """
    score_vectors = np.atleast_2d(np.asarray(score_vectors, dtype=float))

    if nodes is None:
        nodes = model.inputs
        if score_vectors.shape[0] != model.size:
            raise DomainError(
                f"model was fit on {model.size} trajectories, got {score_vectors.shape[0]} scores")
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    if nodes.shape[0] != score_vectors.shape[0]:
        raise DomainError("need one score vector per quadrature node")
    if nodes.shape[1] != model.inputs.shape[1]:
        raise DomainError("quadrature nodes do not live in the model's input space")

    if weights is None:
        weights = np.full(len(nodes), 1.0 / len(nodes))
    weights = np.asarray(weights, dtype=float)

    mean_j, _ = gp_posterior_batch(model, nodes)
    cov_j = gp_posterior_covariance(model, nodes)

    weighted = score_vectors * weights[:, None]
    mean = weighted.T @ mean_j
    if not full_covariance:
        variance = np.einsum('kp,kl,lp->p', weighted, cov_j, weighted)
        return GradientEstimate(mean=mean, covariance=None, variance=variance)
    covariance = weighted.T @ cov_j @ weighted
    covariance = 0.5 * (covariance + covariance.T)
    return GradientEstimate(mean=mean, covariance=covariance, variance=np.diag(covariance).copy())


@dataclass(frozen=True, eq=False)
class SoftmaxBandit:
    """
    One-step softmax bandit with Gaussian reward noise; each trajectory is
    a single pull.  The analytic gradient of expected reward is
    pi_a * (R_a - sum_b pi_b R_b).
    """
    theta: np.ndarray
    reward_means: np.ndarray
    reward_noise: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'theta', np.asarray(self.theta, dtype=float))
        object.__setattr__(self, 'reward_means', np.asarray(self.reward_means, dtype=float))
        if self.theta.shape != self.reward_means.shape:
            raise DomainError("theta and reward_means must have one entry per arm")

    @property
    def n_arms(self):
        return len(self.theta)

    def probabilities(self):
        z = np.exp(self.theta - self.theta.max())
        return z / z.sum()

    def analytic_gradient(self):
        p = self.probabilities()
        return p * (self.reward_means - p @ self.reward_means)

    def arm_scores(self):
        """grad log pi(a) for every arm, one row per arm."""
        return np.eye(self.n_arms) - self.probabilities()[None, :]

    def sample(self, m, rng):
        """returns (arms, rewards) for m pulls"""
        arms = rng.choice(self.n_arms, size=m, p=self.probabilities())
        rewards = self.reward_means[arms] + self.reward_noise * rng.standard_normal(m)
        return arms, rewards

    def score_function(self):
        def grad_log_prob(state, action, theta):
            z = np.exp(theta - theta.max())
            p = z / z.sum()
            return np.eye(len(theta))[int(action[0])] - p
        return ScoreFunction(self.theta, grad_log_prob)

    def trajectories(self, arms, rewards):
        return [Trajectory((Transition(np.zeros(1), np.array([float(a)]), float(r), np.zeros(1)),),
                           max_steps=1)
                for a, r in zip(arms, rewards)]


def bandit_estimates(problem, m, rng, kernel=None, noise_variance=None):
    """
    MC and known-measure BQ estimates from one batch of m pulls.

    The GP lives on one-hot arm features; the quadrature measure is the
    policy's own arm distribution.
    """
    arms, rewards = problem.sample(m, rng)
    scores = problem.arm_scores()[arms]
    mc = mc_gradient_from_terms(rewards, scores)

    features = np.eye(problem.n_arms)
    kernel = kernel or SquaredExponential(lengthscale=0.5, signal_variance=10.0)
    if noise_variance is None:
        noise_variance = max(problem.reward_noise ** 2, 1e-6)
    model = gp_fit(features[arms], rewards, kernel, noise_variance)
    bq = bq_posterior_gradient(model, problem.arm_scores(), nodes=features,
                               weights=problem.probabilities())
    return mc, bq


def estimator_variance_study(problem, M_values, replicates=200, seed=0, out_path=None):
    """
    Repeated MC and BQ estimates of the bandit gradient for each sample
    size M.  Rows follow VARIANCE_STUDY_COLUMNS; written as CSV when
    out_path is given.
    """
    truth = problem.analytic_gradient()
    rows = []
    seeds = np.random.SeedSequence(seed).generate_state(replicates)

    for m in M_values:
        for replicate_seed in seeds:
            rng = np.random.default_rng(int(replicate_seed))
            mc, bq = bandit_estimates(problem, int(m), rng)
            for name, estimate in (('mc', mc), ('bq', bq)):
                for k, value in enumerate(estimate.mean):
                    rows.append((name, int(m), int(replicate_seed), k, float(value), float(truth[k])))

    df = pd.DataFrame(rows, columns=VARIANCE_STUDY_COLUMNS)

    if out_path is not None:
        out_path = pathlib.Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(out_path, index=False)
        logger.info("variance study written to %s", out_path)

    return df


def summarize_variance_study(df):
    """Per (estimator, M, component): mean, variance, bias, stderr, mse."""
    grouped = df.groupby(['estimator', 'M', 'component_index'])
    summary = grouped.agg(
        mean=('estimate', 'mean'),
        variance=('estimate', lambda s: s.var(ddof=1)),
        analytic_truth=('analytic_truth', 'first'),
        replicates=('estimate', 'size'))
    summary['bias'] = summary['mean'] - summary['analytic_truth']
    summary['stderr'] = np.sqrt(summary['variance'] / summary['replicates'])
    sq_error = (df['estimate'] - df['analytic_truth']) ** 2
    summary['mse'] = sq_error.groupby([df['estimator'], df['M'], df['component_index']]).mean()
    return summary.reset_index()


def gaussian_policy_score(actor, states, actions, variance):
    """
    Summed score of a Gaussian exploration policy a ~ N(pi(s), variance I):
    sum_t J_pi(s_t)^T (a_t - pi(s_t)) / variance, flattened over actor params.
    """
    states = np.atleast_2d(states)
    residual = (np.atleast_2d(actions) - forward(actor, states)) / variance
    return gradients_to_vector(backward(actor, states, residual))


def bq_actor_gradient(actor, episodes, variance, disc, kernel=None, noise_variance=1e-2):
    """
    Episodic BQ gradient for the actor from a window of episodes, each given
    as (states, actions, rewards) arrays.

    returns GradientEstimate over the flattened actor parameters
    """
    if not episodes:
        raise DomainError("BQ actor gradient needs at least one episode")
    scores = []
    returns = []
    features = []
    for states, actions, rewards in episodes:
        score = gaussian_policy_score(actor, states, actions, variance)
        discounts = disc.gamma ** np.arange(len(rewards), dtype=float)
        returns.append(float(np.dot(discounts, rewards)))
        scores.append(score)
        # unit-norm scores keep the lengthscale heuristic meaningful
        norm = np.linalg.norm(score)
        features.append(trajectory_features(rewards, score / norm if norm > 0 else score, disc))
    scores = np.stack(scores)
    returns = np.asarray(returns)
    features = np.stack(features)
    if kernel is None:
        kernel = SquaredExponential(median_lengthscale(features), max(float(np.var(returns)), 1e-6))
    noise = noise_variance * kernel.signal_variance
    model = gp_fit(features, returns, kernel, noise)
    return bq_posterior_gradient(model, scores, full_covariance=False)
