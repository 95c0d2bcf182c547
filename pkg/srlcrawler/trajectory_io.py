"""
Line-delimited JSON trajectory traces.

The first line is a header record carrying gamma and max_steps, followed by
one record per transition.  Used by the harness for replay and debugging.
"""
import json
import pathlib

from .errors import DomainError
from .mdp import DiscountSpec, Trajectory, Transition


TRAJECTORY_FORMAT = 'srlcrawler-trajectory/1'


def write_trajectory_jsonl(traj, path, disc, label=''):
    """
    Write traj to path, one JSON record per line.

    returns the output path
    """
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    header = {
        'record': 'header',
        'format': TRAJECTORY_FORMAT,
        'gamma': disc.gamma,
        'max_steps': traj.max_steps,
        'goal_reached_at': traj.goal_reached_at,
        'label': label,
        }

    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(json.dumps(header) + '\n')
        for t, tr in enumerate(traj.transitions):
            record = {
                'record': 'transition',
                't': t,
                'state': tr.state.tolist(),
                'action': tr.action.tolist(),
                'reward': tr.reward,
                'next_state': tr.next_state.tolist(),
                'terminal': tr.terminal,
                }
            handle.write(json.dumps(record) + '\n')

    return path


def read_trajectory_jsonl(path):
    """
    Read a trace written by write_trajectory_jsonl.

    returns (Trajectory, DiscountSpec, label)
    """
    with open(path, encoding='utf-8') as handle:
        lines = [line for line in handle if line.strip()]

    if not lines:
        raise DomainError(f"empty trajectory file: {path}")

    header = json.loads(lines[0])
    if header.get('record') != 'header' or header.get('format') != TRAJECTORY_FORMAT:
        raise DomainError(f"{path} is not a {TRAJECTORY_FORMAT} trace")

    transitions = []
    for line in lines[1:]:
        record = json.loads(line)
        transitions.append(Transition(
            state=record['state'],
            action=record['action'],
            reward=record['reward'],
            next_state=record['next_state'],
            terminal=record['terminal']))

    traj = Trajectory(
        tuple(transitions),
        max_steps=header['max_steps'],
        goal_reached_at=header['goal_reached_at'])

    return traj, DiscountSpec(header['gamma']), header.get('label', '')
