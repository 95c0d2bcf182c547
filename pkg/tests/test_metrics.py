import unittest

import srlcrawler as srl
from srlcrawler import metrics


def _run(seed, eval_first_steps, method='srl', task='x', returns=(0.0,), allowed=100):
    """RunMetrics whose evaluation episodes succeed where a step count is given."""
    return metrics.RunMetrics(
        seed=seed,
        method=method,
        task=task,
        allowed_steps=allowed,
        episode_returns=list(returns),
        episode_success=[False] * len(returns),
        eval_returns=[0.0] * len(eval_first_steps),
        eval_success=[steps is not None for steps in eval_first_steps],
        eval_first_success_steps=list(eval_first_steps),
        train_first_success_steps=[None] * len(returns))


class TestRunMetrics(unittest.TestCase):
    def test_first_successful_eval_episode_counts(self):
        run = _run(0, [None, 30, 10])
        self.assertEqual(run.steps_to_first_success, 30)

    def test_training_episodes_used_without_eval_phase(self):
        run = metrics.RunMetrics(0, 'srl', 'x', 100, episode_returns=[1.0, 2.0],
                                 episode_success=[False, True],
                                 train_first_success_steps=[None, 40])
        self.assertEqual(run.steps_to_first_success, 40)
        self.assertEqual(metrics.success_rate([run]), 1.0)

    def test_area_under_return_curve(self):
        self.assertEqual(_run(0, [None], returns=[1.0, 2.5, -0.5]).area_under_return_curve(), 3.0)
        self.assertEqual(metrics.RunMetrics(0, 'srl', 'x', 100).area_under_return_curve(), 0.0)


class TestSuccessRate(unittest.TestCase):
    def test_run_granularity(self):
        runs = [_run(0, [None, 20]), _run(1, [None, None]), _run(2, [5])]
        self.assertAlmostEqual(metrics.success_rate(runs), 2 / 3)

    def test_episode_granularity(self):
        runs = [_run(0, [None, 20]), _run(1, [None, None]), _run(2, [5])]
        self.assertEqual(metrics.success_rate(runs, 'episode'), 2 / 5)

    def test_failed_run_counts_as_unsuccessful(self):
        failed = metrics.RunMetrics(1, 'srl', 'x', 100, failed=True, error='boom')
        self.assertEqual(metrics.success_rate([_run(0, [10]), failed]), 0.5)
        self.assertAlmostEqual(metrics.avg_first_success([_run(0, [10]), failed]), 0.55)

    def test_empty_and_unknown(self):
        with self.assertRaises(srl.DomainError):
            metrics.success_rate([])
        with self.assertRaises(srl.DomainError):
            metrics.success_rate([_run(0, [1])], 'seed')


class TestFirstSuccess(unittest.TestCase):
    def test_normalized_by_allowed_steps(self):
        self.assertEqual(metrics.avg_first_success([_run(0, [24])]), 0.24)

    def test_never_succeeding_scores_one(self):
        self.assertEqual(metrics.avg_first_success([_run(0, [None, None])]), 1.0)

    def test_immediate_success_scores_zero(self):
        self.assertEqual(metrics.avg_first_success([_run(0, [0])]), 0.0)

    def test_mean_over_trials(self):
        runs = [_run(0, [50]), _run(1, [None])]
        self.assertEqual(metrics.avg_first_success(runs), 0.75)
        self.assertAlmostEqual(metrics.avg_first_success([_run(0, [None, 10])], 'episode'), 0.55)


class TestSignTest(unittest.TestCase):
    def test_no_informative_pairs(self):
        self.assertEqual(metrics.sign_test(0, 0), 1.0)

    def test_all_wins(self):
        self.assertAlmostEqual(metrics.sign_test(10, 0), 0.5 ** 10)

    def test_even_split(self):
        self.assertAlmostEqual(metrics.sign_test(5, 5), 638 / 1024)

    def test_all_losses(self):
        self.assertAlmostEqual(metrics.sign_test(0, 6), 1.0)


class TestCompare(unittest.TestCase):
    def setUp(self):
        self.baseline = [_run(s, [None], method='baseline', returns=[0.0, float(s)]) for s in range(4)]
        self.srl = [_run(s, [10 * (s + 1)], returns=[1.0, float(s)]) for s in range(4)]

    def test_summary(self):
        summary = metrics.compare(self.baseline, self.srl)
        self.assertEqual(summary.task, 'x')
        self.assertEqual((summary.method_a, summary.method_b), ('baseline', 'srl'))
        self.assertEqual(summary.n_seeds, 4)
        self.assertEqual(summary.success_rate_a, 0.0)
        self.assertEqual(summary.success_rate_b, 1.0)
        self.assertEqual(summary.rate_difference, 1.0)
        self.assertAlmostEqual(summary.avg_first_success_b, 0.25)
        self.assertAlmostEqual(summary.first_success_difference, -0.75)
        self.assertEqual((summary.sign_wins, summary.sign_losses, summary.sign_ties), (4, 0, 0))
        self.assertAlmostEqual(summary.sign_test_p, 1 / 16)
        self.assertEqual(summary.per_seed_auc[2], (2, 2.0, 3.0))

    def test_antisymmetric(self):
        forward = metrics.compare(self.baseline, self.srl)
        backward = metrics.compare(self.srl, self.baseline)
        self.assertEqual(forward.rate_difference, -backward.rate_difference)
        self.assertEqual(forward.first_success_difference, -backward.first_success_difference)
        self.assertEqual((forward.sign_wins, forward.sign_losses),
                         (backward.sign_losses, backward.sign_wins))

    def test_ties_are_dropped(self):
        summary = metrics.compare(self.baseline, self.baseline)
        self.assertEqual(summary.sign_ties, 4)
        self.assertEqual(summary.sign_test_p, 1.0)

    def test_mismatched_batteries(self):
        with self.assertRaises(srl.DomainError):
            metrics.compare(self.baseline, self.srl[:3])
        with self.assertRaises(srl.DomainError):
            metrics.compare(self.baseline, [_run(s, [None], task='xy') for s in range(4)])
        with self.assertRaises(srl.DomainError):
            metrics.compare([], self.srl)

    def test_overall_success(self):
        x = metrics.compare(self.baseline, self.srl)
        xy = metrics.compare([_run(0, [None], task='xy', method='baseline')],
                             [_run(0, [None], task='xy')])
        self.assertEqual(metrics.overall_success([x, xy]), 0.5)
        self.assertEqual(metrics.overall_success([x, xy], side='a'), 0.0)
        with self.assertRaises(srl.DomainError):
            metrics.overall_success([])


if __name__ == '__main__':
    unittest.main()
