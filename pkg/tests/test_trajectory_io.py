import json
import pathlib
import tempfile
import unittest

import numpy.testing as npt

import srlcrawler as srl
from srlcrawler import mdp
from srlcrawler.trajectory_io import TRAJECTORY_FORMAT


class TestTrajectoryTrace(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = pathlib.Path(self.tmp.name) / 'trace.jsonl'

    def test_header_then_one_line_per_transition(self):
        traj = mdp.sparse_reward_trajectory(2, 4, state_dim=3)
        srl.write_trajectory_jsonl(traj, self.path, mdp.DiscountSpec(0.9), label='demo')

        lines = self.path.read_text(encoding='utf-8').splitlines()
        self.assertEqual(len(lines), 5)
        header = json.loads(lines[0])
        self.assertEqual(header['record'], 'header')
        self.assertEqual(header['format'], TRAJECTORY_FORMAT)
        self.assertEqual(header['gamma'], 0.9)
        self.assertEqual(header['max_steps'], 4)
        self.assertEqual(header['goal_reached_at'], 2)
        self.assertEqual([json.loads(line)['t'] for line in lines[1:]], [0, 1, 2, 3])

    def test_read_back(self):
        traj = mdp.sparse_reward_trajectory(3, 5, state_dim=2)
        srl.write_trajectory_jsonl(traj, self.path, mdp.DiscountSpec(0.5), label='x')

        loaded, disc, label = srl.read_trajectory_jsonl(self.path)
        self.assertEqual(label, 'x')
        self.assertEqual(disc.gamma, 0.5)
        self.assertEqual(loaded.goal_reached_at, 3)
        npt.assert_array_equal(loaded.rewards, traj.rewards)
        for a, b in zip(loaded.transitions, traj.transitions):
            npt.assert_array_equal(a.state, b.state)
            npt.assert_array_equal(a.next_state, b.next_state)
            self.assertEqual(a.terminal, b.terminal)
        self.assertEqual(srl.discounted_return(loaded, disc), srl.discounted_return(traj, disc))

    def test_rejects_foreign_file(self):
        self.path.write_text(json.dumps({'record': 'header', 'format': 'other/1'}) + '\n',
                             encoding='utf-8')
        with self.assertRaises(srl.DomainError):
            srl.read_trajectory_jsonl(self.path)

    def test_rejects_empty_file(self):
        self.path.write_text('', encoding='utf-8')
        with self.assertRaises(srl.DomainError):
            srl.read_trajectory_jsonl(self.path)


if __name__ == '__main__':
    unittest.main()
