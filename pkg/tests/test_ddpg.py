import unittest

import numpy as np
import numpy.testing as npt

from scipy import stats

import srlcrawler as srl
from srlcrawler import ddpg, hexsim
from srlcrawler import neuralnet as nn
from srlcrawler.mdp import DiscountSpec, Transition
from srlcrawler.presets import desk_preset


def _settings(**overrides):
    settings = desk_preset()
    settings.update({
        'hidden_widths': [8],
        'buffer_size': 50,
        'minibatch_size': 4,
        'base_variance': 0.0016,
        })
    settings.update(overrides)
    return settings


def _transition(value, terminal=False):
    state = np.full(3, float(value))
    return Transition(state, np.array([0.01 * value]), float(value), state + 1.0, terminal)


def _tanh_pair(seed=0):
    actor = nn.init_network(3, [nn.LayerSpec(5, 'tanh'), nn.LayerSpec(2, 'tanh')],
                            role='actor', seed=seed, output_scale=0.1)
    critic = nn.init_network(5, [nn.LayerSpec(6, 'tanh'), nn.LayerSpec(1, 'identity')],
                             seed=seed + 1)
    return actor, critic


def _peaked_critic(obs_dim, best):
    """Q(s, a) = -|a - best|_1, built from relu pairs."""
    act_dim = len(best)
    w1 = np.zeros((obs_dim + act_dim, 2 * act_dim))
    b1 = np.zeros(2 * act_dim)
    for j, value in enumerate(best):
        w1[obs_dim + j, 2 * j] = 1.0
        w1[obs_dim + j, 2 * j + 1] = -1.0
        b1[2 * j] = -value
        b1[2 * j + 1] = value
    hidden = nn.Layer(w1, b1, nn.LayerSpec(2 * act_dim, 'relu'))
    out = nn.Layer(-np.ones((2 * act_dim, 1)), np.zeros(1), nn.LayerSpec(1, 'identity'))
    return nn.NetworkParams((hidden, out), role='critic')


class TestReplayBuffer(unittest.TestCase):
    def test_oldest_entry_evicted(self):
        buf = ddpg.ReplayBuffer(3)
        for value in range(5):
            ddpg.store(buf, _transition(value))
        self.assertEqual(len(buf), 3)
        self.assertEqual([t.reward for t in buf.entries], [2.0, 3.0, 4.0])

    def test_warmup_raises(self):
        buf = ddpg.ReplayBuffer(10)
        ddpg.store(buf, _transition(0))
        with self.assertRaises(srl.WarmupError):
            ddpg.sample_minibatch(buf, 2)

    def test_warmup_is_a_domain_error(self):
        self.assertTrue(issubclass(srl.WarmupError, srl.DomainError))

    def test_sampling_is_seeded_and_without_replacement(self):
        picks = []
        for _ in range(2):
            buf = ddpg.ReplayBuffer(20, rng_seed=11)
            for value in range(20):
                ddpg.store(buf, _transition(value))
            picks.append([t.reward for t in ddpg.sample_minibatch(buf, 10)])
        self.assertEqual(picks[0], picks[1])
        self.assertEqual(len(set(picks[0])), 10)

    def test_full_size_buffer_drops_first_item(self):
        buf = ddpg.ReplayBuffer(1600)
        for value in range(1601):
            ddpg.store(buf, _transition(value))
        self.assertEqual(len(buf), 1600)
        self.assertEqual(buf.entries[0].reward, 1.0)
        self.assertNotIn(0.0, [t.reward for t in buf.entries])

    def test_single_draws_are_uniform(self):
        buf = ddpg.ReplayBuffer(10, rng_seed=2)
        for value in range(10):
            ddpg.store(buf, _transition(value))
        draws = [int(ddpg.sample_minibatch(buf, 1)[0].reward) for _ in range(100_000)]
        counts = np.bincount(draws, minlength=10)
        self.assertGreater(stats.chisquare(counts).pvalue, 0.01)

    def test_capacity_must_be_positive(self):
        with self.assertRaises(srl.DomainError):
            ddpg.ReplayBuffer(0)


class TestExploration(unittest.TestCase):
    def test_variance_decays_geometrically(self):
        sched = ddpg.NoiseSchedule(0.04, 0.5)
        self.assertEqual(sched.variance(), 0.04)
        self.assertAlmostEqual(sched.variance(2), 0.01)
        self.assertEqual(sched.advance().advance().variance(), sched.variance(2))

    def test_variance_halves_after_6931_ticks(self):
        sched = ddpg.NoiseSchedule(0.04)
        self.assertAlmostEqual(sched.variance(6931) / sched.variance(0), 0.5, places=4)

    def test_empirical_noise_variance(self):
        sched = ddpg.NoiseSchedule(0.04, t=100)
        noisy, _ = ddpg.explore(np.zeros(100_000), sched, 9)
        self.assertLess(abs(np.var(noisy) / sched.variance() - 1.0), 0.05)
        self.assertLess(abs(np.mean(noisy)), 5 * np.sqrt(sched.variance() / noisy.size))

    def test_explore_clamps_and_advances(self):
        sched = ddpg.NoiseSchedule(100.0, 0.9)
        noisy, advanced = ddpg.explore(np.zeros(50), sched, 3, -0.1, 0.1)
        self.assertTrue(np.all(np.abs(noisy) <= 0.1))
        self.assertEqual(advanced.t, 1)
        self.assertEqual(sched.t, 0)

    def test_explore_is_seeded(self):
        sched = ddpg.NoiseSchedule(0.01)
        a, _ = ddpg.explore(np.zeros(4), sched, 5)
        b, _ = ddpg.explore(np.zeros(4), sched, 5)
        npt.assert_array_equal(a, b)

    def test_per_episode_clock(self):
        learner = ddpg.build_learner(4, 2, 0.1, _settings(noise_per_episode=True), seed=0)
        ddpg.noisy_action(learner, np.zeros(2))
        ddpg.noisy_action(learner, np.zeros(2))
        self.assertEqual(learner.noise.t, 0)
        ddpg.end_episode(learner)
        self.assertEqual(learner.noise.t, 1)

    def test_per_step_clock(self):
        learner = ddpg.build_learner(4, 2, 0.1, _settings(), seed=0)
        for _ in range(3):
            ddpg.noisy_action(learner, np.zeros(2))
        ddpg.end_episode(learner)
        self.assertEqual(learner.noise.t, 3)


class TestTargets(unittest.TestCase):
    def test_soft_update_blends(self):
        a = nn.build_critic(2, 1, [4], seed=0)
        b = nn.build_critic(2, 1, [4], seed=1)
        pair = ddpg.TargetPair(a, b, tau=0.25)
        updated = ddpg.soft_update(pair)
        expected = 0.75 * nn.params_to_vector(b) + 0.25 * nn.params_to_vector(a)
        npt.assert_allclose(nn.params_to_vector(updated.target), expected)
        self.assertIs(updated.online, a)

    def test_tau_one_copies_online(self):
        a = nn.build_critic(2, 1, [4], seed=0)
        b = nn.build_critic(2, 1, [4], seed=1)
        updated = ddpg.soft_update(ddpg.TargetPair(a, b, tau=1.0))
        npt.assert_array_equal(nn.params_to_vector(updated.target), nn.params_to_vector(a))

    def test_target_converges_to_frozen_online(self):
        a = nn.build_critic(2, 1, [4], seed=0)
        b = nn.build_critic(2, 1, [4], seed=1)
        pair = ddpg.TargetPair(a, b, tau=0.005)
        online = nn.params_to_vector(a)
        gaps = []
        for _ in range(2000):
            pair = ddpg.soft_update(pair)
            gaps.append(np.max(np.abs(nn.params_to_vector(pair.target) - online)))
        self.assertTrue(np.all(np.diff(gaps) < 0.0))
        initial = np.max(np.abs(nn.params_to_vector(b) - online))
        self.assertLess(gaps[-1], 1e-4 * initial)

    def test_tau_out_of_range(self):
        a = nn.build_critic(2, 1, [4], seed=0)
        with self.assertRaises(srl.DomainError):
            ddpg.make_target_pair(a, 0.0)

    def test_td_targets_stop_at_terminals(self):
        actor, critic = _tanh_pair()
        next_states = np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]])
        rewards = np.array([1.0, 2.0])
        targets = ddpg.td_targets(critic, actor, rewards, next_states,
                                  np.array([False, True]), 0.9)
        next_q = float(nn.forward(critic, np.concatenate(
            [next_states[0], nn.forward(actor, next_states[0])]))[0])
        self.assertAlmostEqual(targets[0], 1.0 + 0.9 * next_q, places=12)
        self.assertEqual(targets[1], 2.0)

    def test_critic_regression_reduces_loss(self):
        critic = nn.build_critic(3, 1, [16], seed=3, dropout_rate=None)
        pair = ddpg.make_target_pair(critic, 0.005)
        opt = nn.make_optimizer('adam', critic, 1e-2)
        rng = np.random.default_rng(0)
        inputs = rng.normal(size=(8, 4))
        targets = rng.normal(size=8)
        first, pair, opt = ddpg.regression_update(pair, opt, inputs, targets)
        for _ in range(200):
            loss, pair, opt = ddpg.regression_update(pair, opt, inputs, targets)
        self.assertLess(loss, first)

    def test_critic_loss_falls_on_fixed_batch(self):
        critic = nn.build_critic(3, 1, [16], seed=5, dropout_rate=None)
        actor = nn.build_actor(3, 1, [8], 0.1, seed=6, dropout_rate=None)
        pair = ddpg.make_target_pair(critic, 0.005)
        opt = nn.make_optimizer('adam', critic, 1e-2)
        batch = [_transition(v, terminal=(v > 0.5)) for v in np.linspace(-1.0, 1.0, 8)]
        losses = []
        for _ in range(100):
            loss, pair, opt = ddpg.critic_update(pair, actor, batch, 0.9, opt)
            losses.append(loss)
        self.assertLess(np.mean(losses[-10:]), np.mean(losses[:10]))

    def test_exact_terminal_critic_has_zero_loss(self):
        critic = nn.build_critic(3, 1, [4], seed=0, dropout_rate=None)
        zeroed = nn.params_from_vector(critic, np.zeros(nn.params_to_vector(critic).size))
        last = zeroed.layers[-1]
        exact = nn.NetworkParams(zeroed.layers[:-1] + (nn.Layer(last.weights, np.array([0.5]), last.spec),))
        actor = nn.build_actor(3, 1, [4], 0.1, seed=1)
        batch = [Transition(np.full(3, v), np.array([0.0]), 0.5, np.full(3, v), True)
                 for v in (0.0, 1.0, 2.0)]
        loss, _, _ = ddpg.critic_update(ddpg.make_target_pair(exact, 0.005), actor, batch, 0.9,
                                        nn.make_optimizer('adam', exact, 1e-3))
        self.assertEqual(loss, 0.0)

    def test_non_finite_loss_carries_diagnostics(self):
        critic = nn.build_critic(3, 1, [4], seed=3, dropout_rate=None)
        pair = ddpg.make_target_pair(critic, 0.005)
        opt = nn.make_optimizer('adam', critic, 1e-2)
        with self.assertRaises(srl.NonFiniteError) as ctx:
            ddpg.regression_update(pair, opt, np.zeros((2, 4)), [np.inf, 0.0])
        self.assertEqual(ctx.exception.diagnostics['batch_size'], 2)


class TestActorGradient(unittest.TestCase):
    def setUp(self):
        self.batch = [_transition(v) for v in (0.1, -0.2, 0.3)]

    def test_matches_finite_differences(self):
        actor, critic = _tanh_pair(seed=4)
        states = np.random.default_rng(2).normal(size=(5, 3))
        _, grads = ddpg.actor_objective_gradient(actor, critic, states)
        exact = nn.gradients_to_vector(grads)
        theta = nn.params_to_vector(actor)
        h = 1e-6
        for k in range(theta.size):
            plus = theta.copy()
            plus[k] += h
            minus = theta.copy()
            minus[k] -= h
            up, _ = ddpg.actor_objective_gradient(nn.params_from_vector(actor, plus), critic, states)
            down, _ = ddpg.actor_objective_gradient(nn.params_from_vector(actor, minus), critic, states)
            numeric = (up - down) / (2 * h)
            self.assertLessEqual(abs(exact[k] - numeric),
                                 max(1e-4 * max(abs(exact[k]), abs(numeric)), 1e-6))

    def test_actor_moves_toward_critic_peak(self):
        best = np.array([0.08, -0.08])
        actor, _ = _tanh_pair(seed=8)
        critic = _peaked_critic(3, best)
        states = np.stack([t.state for t in self.batch])
        pair = ddpg.make_target_pair(actor, 0.005)
        opt = nn.make_optimizer('adam', actor, 1e-2)
        start = np.abs(nn.forward(actor, states) - best).sum(axis=1).mean()
        for _ in range(300):
            pair, opt, _ = ddpg.actor_update(pair, critic, self.batch, opt)
        end = np.abs(nn.forward(pair.online, states) - best).sum(axis=1).mean()
        self.assertLess(end, 0.5 * start)

    def test_flat_critic_leaves_actor_unchanged(self):
        actor, critic = _tanh_pair(seed=9)
        flat = nn.params_from_vector(critic, np.zeros(nn.params_to_vector(critic).size))
        pair = ddpg.make_target_pair(actor, 0.005)
        pair, _, _ = ddpg.actor_update(pair, flat, self.batch, nn.make_optimizer('adam', actor, 1e-2))
        npt.assert_array_equal(nn.params_to_vector(pair.online), nn.params_to_vector(actor))

    def test_actor_update_ascends(self):
        actor, critic = _tanh_pair(seed=6)
        pair = ddpg.make_target_pair(actor, 0.005)
        opt = nn.make_optimizer('adam', actor, 1e-3)
        batch = [_transition(v) for v in (0.1, -0.2, 0.3)]
        states = np.stack([t.state for t in batch])
        before, _ = ddpg.actor_objective_gradient(actor, critic, states)
        pair, opt, objective = ddpg.actor_update(pair, critic, batch, opt)
        after, _ = ddpg.actor_objective_gradient(pair.online, critic, states)
        self.assertEqual(objective, before)
        self.assertGreater(after, before)


class TestLearner(unittest.TestCase):
    def setUp(self):
        self.config = hexsim.RobotConfig(max_steps=30)
        self.task = hexsim.make_task('x', self.config)
        self.damage = hexsim.healthy_mask(self.config)

    def _run(self, seed, settings=None, steps=30):
        obs_dim = hexsim.observation_dim(self.config)
        learner = ddpg.build_learner(obs_dim, self.config.num_joints, self.config.max_delta,
                                     settings or _settings(), seed)
        state, _ = hexsim.reset(self.config, self.damage, self.task)
        for _ in range(steps):
            _, _, state, done = ddpg.ddpg_step(state, learner)
            if done:
                break
        return learner, state

    def test_seeded_runs_are_identical(self):
        a, state_a = self._run(7)
        b, state_b = self._run(7)
        npt.assert_array_equal(nn.params_to_vector(a.actor.online), nn.params_to_vector(b.actor.online))
        npt.assert_array_equal(nn.params_to_vector(a.critic.target), nn.params_to_vector(b.critic.target))
        npt.assert_array_equal(state_a.body_pose, state_b.body_pose)
        self.assertEqual(a.last_critic_loss, b.last_critic_loss)

    def test_different_seeds_differ(self):
        a, _ = self._run(1, steps=1)
        b, _ = self._run(2, steps=1)
        self.assertFalse(np.array_equal(nn.params_to_vector(a.actor.online),
                                        nn.params_to_vector(b.actor.online)))

    def test_learning_starts_after_warmup(self):
        learner, _ = self._run(0, steps=3)
        self.assertIsNone(learner.last_critic_loss)
        self.assertEqual(len(learner.buffer), 3)
        learner, _ = self._run(0, steps=10)
        self.assertIsNotNone(learner.last_critic_loss)

    def test_eval_step_leaves_learner_untouched(self):
        learner, state = self._run(0, steps=5)
        before = nn.params_to_vector(learner.actor.online)
        action, _, _, _ = ddpg.ddpg_step(state, learner, train=False)
        npt.assert_array_equal(action, nn.forward(learner.actor.online, hexsim.observation(state)))
        npt.assert_array_equal(nn.params_to_vector(learner.actor.online), before)
        self.assertEqual(len(learner.buffer), 5)

    def test_bq_mode_skips_deterministic_actor_step(self):
        learner, _ = self._run(0, settings=_settings(actor_gradient='bq'), steps=10)
        self.assertIsNotNone(learner.last_critic_loss)
        self.assertIsNone(learner.last_actor_objective)
        self.assertEqual(learner.actor_opt.step_count, 0)

    def test_bq_actor_update_takes_one_step(self):
        learner, _ = self._run(0, settings=_settings(actor_gradient='bq'), steps=1)
        rng = np.random.default_rng(0)
        obs_dim = hexsim.observation_dim(self.config)
        episodes = [(rng.normal(size=(6, obs_dim)),
                     rng.normal(scale=0.05, size=(6, self.config.num_joints)),
                     rng.normal(size=6))
                    for _ in range(4)]
        before = nn.params_to_vector(learner.actor.online)
        estimate = ddpg.bq_actor_update(learner, episodes, DiscountSpec(0.9))
        self.assertEqual(estimate.mean.shape, before.shape)
        self.assertTrue(np.all(np.isfinite(estimate.mean)))
        self.assertEqual(learner.actor_opt.step_count, 1)
        self.assertFalse(np.array_equal(nn.params_to_vector(learner.actor.online), before))


if __name__ == '__main__':
    unittest.main()
