"""
Experiment configuration: presets, TOML/JSON files, CLI overrides and
environment variables, in increasing order of precedence.

Environment variables:
    SRLCRAWLER_OUTPUT_DIR   output directory
    SRLCRAWLER_WORKERS      size of the seed worker pool
"""
from __future__ import annotations

import json
import os
import pathlib
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, replace
from typing import List, Optional

from . import hexsim
from .errors import ConfigError
from .presets import get_preset, robot_defaults, task_defaults


OUTPUT_DIR_ENV = 'SRLCRAWLER_OUTPUT_DIR'
WORKERS_ENV = 'SRLCRAWLER_WORKERS'
METHODS = ('baseline', 'srl')
DAMAGE_KINDS = ('task_default', 'none', 'lock_joint', 'amputate_leg')


@dataclass(frozen=True)
class DamageSchedule:
    """
    kind:             task_default, none, lock_joint or amputate_leg
    leg:              damaged leg; None draws one uniformly from random_leg_seed
    joint:            joint name for lock_joint
    at_episode:       first training episode run with damage (earlier ones are healthy)
    at_step:          step inside that episode where damage is injected; None
                      means at the episode boundary
    random_leg_seed:  None uses the run seed
    """
    kind: str = 'task_default'
    leg: Optional[int] = None
    joint: str = 'tibia'
    at_episode: int = 0
    at_step: Optional[int] = None
    random_leg_seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in DAMAGE_KINDS:
            raise ConfigError(f"unknown damage kind '{self.kind}', choose from {DAMAGE_KINDS}")
        if self.joint not in hexsim.JOINT_NAMES:
            raise ConfigError(f"unknown joint '{self.joint}'")
        if self.at_episode < 0 or (self.at_step is not None and self.at_step < 0):
            raise ConfigError("damage timing must be nonnegative")

    def resolve(self, config, task_variant, seed):
        """DamageMask this schedule applies to a run with the given seed."""
        leg_seed = seed if self.random_leg_seed is None else self.random_leg_seed
        kind = self.kind
        if kind == 'task_default':
            if self.leg is None:
                return hexsim.default_damage(task_variant, config, leg_seed)
            kind = task_defaults()[task_variant]['damage']

        mask = hexsim.healthy_mask(config)
        if kind == 'none':
            return mask
        leg = hexsim.random_leg(config, leg_seed) if self.leg is None else self.leg
        if not 0 <= leg < config.num_legs:
            raise ConfigError(f"leg {leg} does not exist on a {config.num_legs}-legged robot")
        if kind == 'lock_joint':
            return hexsim.lock_joint(mask, leg, self.joint)
        return hexsim.amputate_leg(mask, leg)


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = 'srl'
    task: str = 'x'
    preset: str = 'desk'
    damage: DamageSchedule = field(default_factory=DamageSchedule)
    episodes: int = 300
    steps_per_episode: int = 400
    seeds: List[int] = field(default_factory=lambda: list(range(10)))
    eval_episodes: int = 20
    trial_granularity: str = 'run'
    pretrain_episodes: int = 0
    output_dir: pathlib.Path = pathlib.Path('srl_runs')
    workers: int = 1
    write_traces: bool = True
    behavior_enabled: bool = True
    settings: dict = field(default_factory=dict)
    robot: dict = field(default_factory=dict)
    task_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got '{self.method}'")
        if self.task not in ('x', 'xy', 'p2p'):
            raise ConfigError(f"task must be x, xy or p2p, got '{self.task}'")
        if not self.seeds:
            raise ConfigError("seed battery must not be empty")
        if self.episodes < 0 or self.steps_per_episode < 1 or self.eval_episodes < 0:
            raise ConfigError("episodes/eval_episodes must be >= 0 and steps_per_episode >= 1")
        if self.trial_granularity not in ('run', 'episode'):
            raise ConfigError("trial_granularity must be 'run' or 'episode'")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        object.__setattr__(self, 'seeds', [int(s) for s in self.seeds])
        object.__setattr__(self, 'output_dir', pathlib.Path(self.output_dir))

    def training_settings(self):
        """Preset values overlaid with this config's training settings."""
        settings = get_preset(self.preset)
        settings.update(self.settings)
        return settings

    @property
    def desk_verified(self):
        return bool(self.training_settings()['desk_verified'])

    def robot_config(self):
        values = robot_defaults()
        values.update(self.robot)
        values['max_steps'] = self.steps_per_episode
        return hexsim.RobotConfig(**values)

    def run_dir(self):
        return self.output_dir / f"{self.method}_{self.task}"


def parse_seeds(text):
    """'a..b' (inclusive), 'a,b,c' or a single integer."""
    text = str(text).strip()
    try:
        if '..' in text:
            start, stop = text.split('..')
            seeds = list(range(int(start), int(stop) + 1))
        else:
            seeds = [int(part) for part in text.split(',') if part.strip()]
    except ValueError as err:
        raise ConfigError(f"cannot parse seed list '{text}'") from err
    if not seeds:
        raise ConfigError(f"seed list '{text}' is empty")
    return seeds


def read_config_file(path):
    """Load a TOML or JSON file into a dictionary."""
    path = pathlib.Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix.lower() == '.toml':
        with open(path, 'rb') as handle:
            return tomllib.load(handle)
    if path.suffix.lower() == '.json':
        with open(path, encoding='utf-8') as handle:
            return json.load(handle)
    raise ConfigError(f"config file must be .toml or .json, got {path.suffix}")


def _settings_from(preset_name, training):
    settings = get_preset(preset_name)
    settings.update(training)
    if settings.get('buffer_cap'):
        settings['buffer_size'] = min(settings['buffer_size'], int(settings['buffer_cap']))
    return settings


def build_config(values=None, **overrides):
    """
    ExperimentConfig from a dictionary of file values, CLI overrides and the
    environment.  Unset episode / step / seed counts come from the preset.
    """
    values = dict(values or {})
    values.update({k: v for k, v in overrides.items() if v is not None})

    preset = values.get('preset', 'desk')
    task = values.get('task', 'x')
    try:
        settings = _settings_from(preset, values.get('training', {}))
    except KeyError as err:
        raise ConfigError(str(err)) from err

    seeds = values.get('seeds', settings['seeds'])
    if isinstance(seeds, str):
        seeds = parse_seeds(seeds)

    output_dir = os.environ.get(OUTPUT_DIR_ENV) or values.get('output_dir', 'srl_runs')
    workers = os.environ.get(WORKERS_ENV) or values.get('workers', 1)
    try:
        workers = int(workers)
    except ValueError as err:
        raise ConfigError(f"{WORKERS_ENV} must be an integer") from err

    return ExperimentConfig(
        method=values.get('method', 'srl'),
        task=task,
        preset=preset,
        damage=DamageSchedule(**values.get('damage', {})),
        episodes=int(values.get('episodes', settings['episodes'])),
        steps_per_episode=int(values.get('steps_per_episode', settings['steps_per_episode'])),
        seeds=seeds,
        eval_episodes=int(values.get('eval_episodes', settings['eval_episodes'])),
        trial_granularity=values.get('trial_granularity', 'run'),
        pretrain_episodes=int(values.get('pretrain_episodes', 0)),
        output_dir=pathlib.Path(output_dir),
        workers=workers,
        write_traces=bool(values.get('write_traces', True)),
        behavior_enabled=bool(values.get('behavior_enabled', True)),
        settings=settings,
        robot=dict(values.get('robot', {})),
        task_options=dict(values.get('task_options', {})))


def load_experiment_config(path=None, **overrides):
    values = read_config_file(path) if path is not None else {}
    return build_config(values, **overrides)


def with_method(cfg, method):
    return replace(cfg, method=method)
