import unittest

import numpy as np
import numpy.testing as npt

import srlcrawler as srl
from srlcrawler import neuralnet as nn


def _small_network(rng, seed, activation='tanh'):
    n_in = int(rng.integers(1, 5))
    widths = [int(w) for w in rng.integers(1, 6, size=int(rng.integers(1, 3)))]
    specs = [nn.LayerSpec(w, activation) for w in widths]
    specs.append(nn.LayerSpec(int(rng.integers(1, 4)), 'identity'))
    return nn.init_network(n_in, specs, seed=seed)


def _scalar_loss(params, x, upstream, mask=None):
    return float(np.sum(nn.forward(params, x, mask) * upstream))


def _assert_close(test, exact, numeric):
    err = abs(exact - numeric)
    test.assertLessEqual(err, max(1e-4 * max(abs(exact), abs(numeric)), 1e-6))


def _check_parameter_gradients(test, params, x, upstream, mask=None, h=1e-6):
    exact = nn.gradients_to_vector(nn.backward(params, x, upstream, mask))
    theta = nn.params_to_vector(params)
    for k in range(theta.size):
        plus = theta.copy()
        plus[k] += h
        minus = theta.copy()
        minus[k] -= h
        numeric = (_scalar_loss(nn.params_from_vector(params, plus), x, upstream, mask)
                   - _scalar_loss(nn.params_from_vector(params, minus), x, upstream, mask)) / (2 * h)
        _assert_close(test, exact[k], numeric)


class TestForward(unittest.TestCase):
    def test_single_vector_and_batch_agree(self):
        critic = nn.build_critic(4, 2, [8, 8], seed=1)
        x = np.random.default_rng(0).normal(size=(5, 6))
        batch = nn.forward(critic, x)
        for row, out in zip(x, batch):
            npt.assert_allclose(nn.forward(critic, row), out)

    def test_actor_output_bounded(self):
        actor = nn.build_actor(6, 3, [16], action_bound=0.1, seed=2)
        out = nn.forward(actor, np.random.default_rng(1).normal(scale=50.0, size=(20, 6)))
        self.assertTrue(np.all(np.abs(out) <= 0.1))

    def test_matches_explicit_matrix_products(self):
        rng = np.random.default_rng(4)
        specs = [nn.LayerSpec(5, 'relu'), nn.LayerSpec(3, 'tanh'), nn.LayerSpec(2, 'identity')]
        params = nn.init_network(4, specs, seed=8)
        x = rng.normal(size=(6, 4))
        (w1, b1), (w2, b2), (w3, b3) = [(l.weights, l.biases) for l in params.layers]
        expected = np.tanh(np.maximum(x @ w1 + b1, 0.0) @ w2 + b2) @ w3 + b3
        npt.assert_allclose(nn.forward(params, x), expected, rtol=1e-12, atol=1e-12)

    def test_input_dimension_checked(self):
        critic = nn.build_critic(4, 2, [8], seed=1)
        with self.assertRaises(srl.DomainError):
            nn.forward(critic, np.zeros(5))

    def test_layer_spec_validation(self):
        with self.assertRaises(srl.DomainError):
            nn.LayerSpec(0)
        with self.assertRaises(srl.DomainError):
            nn.LayerSpec(4, 'sigmoid')
        with self.assertRaises(srl.DomainError):
            nn.LayerSpec(4, 'relu', 1.0)

    def test_init_is_seeded(self):
        a = nn.build_critic(3, 1, [5], seed=7)
        b = nn.build_critic(3, 1, [5], seed=7)
        npt.assert_array_equal(nn.params_to_vector(a), nn.params_to_vector(b))
        bound = 1.0 / np.sqrt(4)
        self.assertTrue(np.all(np.abs(a.layers[0].weights) <= bound))


class TestBackward(unittest.TestCase):
    def test_parameter_gradients_match_finite_differences(self):
        rng = np.random.default_rng(42)
        for trial in range(100):
            params = _small_network(rng, trial)
            x = rng.normal(size=(3, params.input_dim))
            upstream = rng.normal(size=(3, params.output_dim))
            _check_parameter_gradients(self, params, x, upstream)

    def test_relu_gradients_match_finite_differences(self):
        rng = np.random.default_rng(11)
        for trial in range(100):
            params = _small_network(rng, 500 + trial, activation='relu')
            x = rng.normal(size=(3, params.input_dim))
            upstream = rng.normal(size=(3, params.output_dim))
            _check_parameter_gradients(self, params, x, upstream)

    def test_input_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        h = 1e-6
        for trial in range(20):
            params = _small_network(rng, 1000 + trial)
            x = rng.normal(size=params.input_dim)
            upstream = rng.normal(size=params.output_dim)
            exact = nn.backward(params, x, upstream).input_grad
            for k in range(x.size):
                plus = x.copy()
                plus[k] += h
                minus = x.copy()
                minus[k] -= h
                numeric = (_scalar_loss(params, plus, upstream)
                           - _scalar_loss(params, minus, upstream)) / (2 * h)
                _assert_close(self, exact[k], numeric)

    def test_gradients_under_fixed_dropout_mask(self):
        rng = np.random.default_rng(3)
        specs = [nn.LayerSpec(6, 'tanh', 0.3), nn.LayerSpec(1, 'identity')]
        params = nn.init_network(3, specs, seed=9)
        mask = nn.make_dropout_mask(params, 123)
        x = rng.normal(size=(4, 3))
        upstream = rng.normal(size=(4, 1))
        _check_parameter_gradients(self, params, x, upstream, mask)

    def test_zero_upstream_gives_zero_gradients(self):
        params = nn.build_critic(3, 2, [6, 4], seed=1)
        x = np.random.default_rng(2).normal(size=(4, 5))
        grads = nn.backward(params, x, np.zeros((4, 1)))
        npt.assert_array_equal(nn.gradients_to_vector(grads), 0.0)
        npt.assert_array_equal(grads.input_grad, 0.0)

    def test_linear_map_gradients(self):
        w = np.array([[2.0, -1.0, 0.5], [0.25, 3.0, -2.0]])
        params = nn.NetworkParams((nn.Layer(w, np.zeros(3), nn.LayerSpec(3, 'identity')),))
        x = np.array([1.5, -0.5])
        upstream = np.array([1.0, 2.0, -1.0])
        grads = nn.backward(params, x, upstream)
        dw, db = grads.layers[0]
        npt.assert_allclose(dw, np.outer(x, upstream))
        npt.assert_allclose(db, upstream)
        npt.assert_allclose(grads.input_grad, w @ upstream)

    def test_upstream_batch_must_match(self):
        params = nn.build_critic(2, 1, [4], seed=0)
        with self.assertRaises(srl.DomainError):
            nn.backward(params, np.zeros((3, 3)), np.zeros((2, 1)))


class TestDropout(unittest.TestCase):
    def setUp(self):
        self.critic = nn.build_critic(4, 2, [16, 16], seed=5, dropout_rate=0.2)
        self.state = np.linspace(-1.0, 1.0, 4)
        self.action = np.array([0.05, -0.05])

    def test_mask_regenerates_from_seed(self):
        a = nn.make_dropout_mask(self.critic, 77)
        b = nn.make_dropout_mask(self.critic, 77)
        self.assertEqual(a.keep.keys(), b.keep.keys())
        for index in a.keep:
            npt.assert_array_equal(a.keep[index], b.keep[index])

    def test_q_samples_are_seeded_and_spread(self):
        first = nn.mc_dropout_q_samples(self.critic, self.state, self.action, 32, seed=4)
        second = nn.mc_dropout_q_samples(self.critic, self.state, self.action, 32, seed=4)
        self.assertEqual(first, second)
        self.assertEqual(len(first), 32)
        self.assertGreater(np.std(first), 0.0)

    def test_rescaled_masks_are_unbiased_before_linear_output(self):
        x = np.concatenate([self.state, self.action])
        plain = float(nn.forward(self.critic, x)[0])
        samples = np.array(nn.mc_dropout_q_samples(self.critic, self.state, self.action, 4000, seed=1))
        stderr = samples.std(ddof=1) / np.sqrt(samples.size)
        self.assertLess(abs(samples.mean() - plain), 5 * stderr + 1e-12)

    def test_linear_critic_sample_mean_matches_expectation(self):
        specs = [nn.LayerSpec(8, 'identity', 0.3), nn.LayerSpec(1, 'identity')]
        critic = nn.init_network(4, specs, seed=3)
        x = np.concatenate([self.state[:2], self.action])
        (w1, b1), (w2, b2) = [(l.weights, l.biases) for l in critic.layers]
        # E[keep / keep_rate] = 1 for every unit
        expected = float(((x @ w1 + b1) @ w2 + b2)[0])
        samples = np.array(nn.mc_dropout_q_samples(critic, self.state[:2], self.action, 10_000, seed=12))
        stderr = samples.std(ddof=1) / np.sqrt(samples.size)
        self.assertLess(abs(samples.mean() - expected), 3 * stderr)

    def test_critic_without_dropout_has_no_posterior(self):
        critic = nn.build_critic(4, 2, [8], seed=0, dropout_rate=None)
        with self.assertRaises(srl.ContractViolation):
            nn.mc_dropout_q_samples(critic, self.state, self.action, 4, seed=0)

    def test_sample_count_must_be_positive(self):
        with self.assertRaises(srl.DomainError):
            nn.mc_dropout_q_samples(self.critic, self.state, self.action, 0, seed=0)

    def test_zero_rate_keeps_every_unit(self):
        critic = nn.build_critic(4, 2, [8], seed=0, dropout_rate=0.0)
        samples = nn.mc_dropout_q_samples(critic, self.state, self.action, 5, seed=0)
        plain = float(nn.forward(critic, np.concatenate([self.state, self.action]))[0])
        npt.assert_allclose(samples, [plain] * 5)


class TestOptimizers(unittest.TestCase):
    def setUp(self):
        self.params = nn.build_critic(2, 1, [4], seed=0, dropout_rate=None)
        x = np.array([[0.1, 0.2, 0.3]])
        self.grads = nn.backward(self.params, x, np.ones((1, 1)))

    def test_adam_first_step_moves_by_learning_rate(self):
        opt = nn.make_optimizer('adam', self.params, 1e-3)
        new, opt = nn.optimize_step(self.params, self.grads, opt)
        delta = nn.params_to_vector(new) - nn.params_to_vector(self.params)
        g = nn.gradients_to_vector(self.grads)
        moved = np.abs(g) > 1e-3
        npt.assert_allclose(delta[moved], -1e-3 * np.sign(g[moved]), rtol=1e-3)
        self.assertEqual(opt.step_count, 1)

    def test_adam_zero_gradient_keeps_parameters(self):
        zero = nn.scale_gradients(self.grads, 0.0)
        opt = nn.make_optimizer('adam', self.params, 1e-3)
        new, opt = nn.optimize_step(self.params, zero, opt)
        npt.assert_array_equal(nn.params_to_vector(new), nn.params_to_vector(self.params))
        self.assertEqual(opt.step_count, 1)

        _, warm = nn.optimize_step(self.params, self.grads, nn.make_optimizer('adam', self.params, 1e-3))
        _, decayed = nn.optimize_step(self.params, zero, warm)
        npt.assert_allclose(decayed.first_moment, 0.9 * warm.first_moment)
        npt.assert_allclose(decayed.second_moment, 0.999 * warm.second_moment)

    def test_rmsprop_step_converges_to_learning_rate(self):
        params = nn.NetworkParams((nn.Layer(np.zeros((1, 1)), np.zeros(1), nn.LayerSpec(1, 'identity')),))
        grads = nn.Gradients(((np.array([[0.3]]), np.array([-0.7])),))
        opt = nn.make_optimizer('rmsprop', params, 1e-2)
        for _ in range(3000):
            new, opt = nn.optimize_step(params, grads, opt)
            delta = nn.params_to_vector(new) - nn.params_to_vector(params)
            params = new
        npt.assert_allclose(delta, [-1e-2, 1e-2], rtol=1e-6)

    def test_rmsprop_descends(self):
        opt = nn.make_optimizer('rmsprop', self.params, 1e-2)
        new, opt = nn.optimize_step(self.params, self.grads, opt)
        delta = nn.params_to_vector(new) - nn.params_to_vector(self.params)
        g = nn.gradients_to_vector(self.grads)
        self.assertLess(float(np.dot(delta, g)), 0.0)
        self.assertIsNone(opt.first_moment)

    def test_non_finite_gradient_names_layer(self):
        layers = list(self.grads.layers)
        dw, db = layers[1]
        bad = dw.copy()
        bad[0, 0] = np.nan
        layers[1] = (bad, db)
        opt = nn.make_optimizer('adam', self.params, 1e-3)
        with self.assertRaises(srl.NonFiniteError) as ctx:
            nn.optimize_step(self.params, nn.Gradients(tuple(layers)), opt)
        self.assertEqual(ctx.exception.layer_index, 1)

    def test_shape_mismatch_rejected(self):
        other = nn.build_critic(2, 1, [5], seed=0, dropout_rate=None)
        grads = nn.backward(other, np.zeros(3), np.ones(1))
        opt = nn.make_optimizer('adam', self.params, 1e-3)
        with self.assertRaises(srl.DomainError):
            nn.optimize_step(self.params, grads, opt)

    def test_unknown_optimizer(self):
        with self.assertRaises(srl.DomainError):
            nn.make_optimizer('sgd', self.params, 1e-3)


if __name__ == '__main__':
    unittest.main()
