"""
Codes to run full seeded experiments: training with damage, the
evaluation phase, and every per-seed output file.

A run directory holds, per seed, metrics_seed<seed>.csv, the SRL decision
log decisions_seed<seed>.csv, trace files and a checkpoint, plus one
run_metadata.json describing the whole battery.
"""
import logging
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import csv_out, ddpg, hexsim
from .checkpoint import load_checkpoint, save_checkpoint
from .controller import (ControllerSettings, hindsight_value_update, new_controller,
                         srl_step, start_episode)
from .errors import DomainError
from .metrics import RunMetrics
from .mdp import DiscountSpec, Trajectory
from .presets import robot_defaults, task_defaults
from .trajectory_io import write_trajectory_jsonl


logger = logging.getLogger(__name__)

EVALUATION_PHASE = (
    "after training, eval_episodes episodes on the damaged robot with the "
    "learned controller, no exploration noise and no learning; a run-level "
    "trial succeeds if any evaluation episode reaches the oracle threshold")

PHASE_CODES = {'pretrain': 0, 'train': 1, 'eval': 2}


def base_variance(settings, config):
    """Preset variance, or (0.2 * action range) ** 2 when unset."""
    if settings.get('base_variance') is not None:
        return float(settings['base_variance'])
    return (0.2 * 2.0 * config.max_delta) ** 2


def build_task(cfg, config):
    """TaskMode for cfg.task with the protocol defaults and cfg.task_options."""
    options = {}
    fraction = task_defaults()[cfg.task]['threshold_fraction']
    if fraction is not None:
        options['threshold_fraction'] = fraction
    options.update(cfg.task_options)
    gamma = cfg.training_settings()['gamma']
    return hexsim.make_task(cfg.task, config, gamma=gamma, **options)


def _task_dict(task):
    return {
        'variant': task.variant,
        'oracle_threshold': task.oracle_threshold,
        'target': None if task.target is None else list(task.target),
        'radius': task.radius,
        'terminal_bonus': task.terminal_bonus,
        }


@dataclass
class EpisodeResult:
    record: dict
    trajectory: Trajectory
    decisions: list = field(default_factory=list)


@dataclass
class SeedRun:
    """Everything one seeded run carries from episode to episode."""
    seed: int
    method: str
    config: hexsim.RobotConfig
    task: hexsim.TaskMode
    damage: hexsim.DamageMask
    disc: DiscountSpec
    learner: ddpg.Learner
    controller_settings: ControllerSettings
    controller: Optional[object] = None
    bq_episodes: Optional[deque] = None

    @property
    def is_srl(self):
        return self.method == 'srl'

    def episode(self, phase, index, start_damage, inject_at=None, train=True):
        """
        One episode from reset.  When inject_at is set, self.damage is applied
        at that step of the episode.
        """
        reset_seed = np.random.SeedSequence([self.seed, PHASE_CODES[phase], index])
        state, _ = hexsim.reset(self.config, start_damage, self.task,
                                seed=int(reset_seed.generate_state(1)[0]))
        if self.is_srl:
            self.controller = start_episode(self.controller)

        transitions = []
        decisions = []
        fallback_steps = []
        goal_at = None
        accepts_before = (0, 0)
        if self.is_srl:
            accepts_before = (self.controller.accept_count, self.controller.fallback_count)

        for t in range(self.config.max_steps):
            if inject_at is not None and t == inject_at:
                state = hexsim.apply_damage(state, self.damage)

            if self.is_srl:
                _, transition, next_state, done, self.controller, decision, fallback = srl_step(
                    state, self.learner, self.controller, self.controller_settings, train)
                decisions.append(decision)
                if fallback:
                    fallback_steps.append(t)
            else:
                _, transition, next_state, done = ddpg.ddpg_step(state, self.learner, train)

            transitions.append(transition)
            if next_state.succeeded and goal_at is None:
                goal_at = next_state.step_count
            state = next_state
            if done:
                break

        trajectory = Trajectory(tuple(transitions), max_steps=self.config.max_steps,
                                goal_reached_at=goal_at)

        if train:
            self._end_of_episode(trajectory, fallback_steps)

        accept_fraction = float('nan')
        if self.is_srl:
            accepted = self.controller.accept_count - accepts_before[0]
            fell_back = self.controller.fallback_count - accepts_before[1]
            if accepted + fell_back:
                accept_fraction = accepted / (accepted + fell_back)

        record = {
            'phase': phase,
            'episode': index,
            'steps': len(transitions),
            'return': float(trajectory.rewards.sum()),
            'success': goal_at is not None,
            'first_success_step': None if goal_at is None else goal_at - 1,
            'noise_variance': self.learner.noise.variance(),
            'critic_loss': _or_nan(self.learner.last_critic_loss),
            'actor_loss': _or_nan(None if self.learner.last_actor_objective is None
                                  else -self.learner.last_actor_objective),
            'accept_fraction': accept_fraction,
            }
        return EpisodeResult(record, trajectory, decisions)

    def _end_of_episode(self, trajectory, fallback_steps):
        observations = np.stack([tr.state for tr in trajectory.transitions])
        actions = np.stack([tr.action for tr in trajectory.transitions])
        rewards = trajectory.rewards

        if self.is_srl and fallback_steps:
            hindsight_value_update(self.learner, observations, actions, rewards,
                                   fallback_steps, self.disc)

        if self.bq_episodes is not None:
            self.bq_episodes.append((observations, actions, rewards))
            if len(self.bq_episodes) == self.bq_episodes.maxlen:
                ddpg.bq_actor_update(self.learner, list(self.bq_episodes), self.disc)

        ddpg.end_episode(self.learner)


def _or_nan(value):
    return float('nan') if value is None else float(value)


def _seed_run(cfg, seed, settings, config, task, damage):
    settings = dict(settings)
    settings['base_variance'] = base_variance(settings, config)
    learner = ddpg.build_learner(hexsim.observation_dim(config), config.num_joints,
                                 config.max_delta, settings, seed)
    controller_settings = ControllerSettings(
        threshold=settings['accept_threshold'],
        n_samples=settings['n_q_samples'],
        behavior_enabled=cfg.behavior_enabled)

    bq_episodes = None
    if settings.get('actor_gradient', 'dpg') == 'bq':
        bq_episodes = deque(maxlen=int(settings['bq_window']))

    run = SeedRun(
        seed=seed,
        method=cfg.method,
        config=config,
        task=task,
        damage=damage,
        disc=DiscountSpec(settings['gamma']),
        learner=learner,
        controller_settings=controller_settings,
        bq_episodes=bq_episodes)
    if run.is_srl:
        run.controller = new_controller(learner.controller_seed)
    return run, settings


def run_seed(cfg, seed, task=None):
    """
    Train one seed, run its evaluation phase and write its outputs.

    Parameters
    ----------
    cfg : ExperimentConfig
        Experiment to run.
    seed : int
        Seed of this run; every random stream derives from it.
    task : hexsim.TaskMode, optional
        Prebuilt task, shared by all seeds of an experiment.  Built from cfg
        when not given.

    Returns
    -------
    RunMetrics
        Metrics of this seed, as written to metrics_seed<seed>.csv.
    """
    start = time.perf_counter()
    config = cfg.robot_config()
    task = build_task(cfg, config) if task is None else task
    damage = cfg.damage.resolve(config, cfg.task, seed)
    healthy = hexsim.healthy_mask(config)
    run, settings = _seed_run(cfg, seed, cfg.training_settings(), config, task, damage)
    run_dir = cfg.run_dir()

    records = []
    decision_rows = []
    last_train = None

    for index in range(cfg.pretrain_episodes):
        records.append(run.episode('pretrain', index, healthy).record)

    schedule = cfg.damage
    for index in range(cfg.episodes):
        if index < schedule.at_episode:
            start_damage, inject_at = healthy, None
        elif index == schedule.at_episode and schedule.at_step is not None:
            start_damage, inject_at = healthy, schedule.at_step
        else:
            start_damage, inject_at = damage, None

        result = run.episode('train', index, start_damage, inject_at)
        records.append(result.record)
        decision_rows.extend((index, decision) for decision in result.decisions)
        last_train = result.trajectory
        logger.debug("seed %d episode %d: return %.4f success %s", seed, index,
                     result.record['return'], result.record['success'])

    first_eval = None
    for index in range(cfg.eval_episodes):
        result = run.episode('eval', index, damage, train=False)
        records.append(result.record)
        if first_eval is None:
            first_eval = result.trajectory

    csv_out.export_metrics_to_csv(records, seed, output_path=run_dir)
    decision_log = None
    if run.is_srl:
        decision_log = str(csv_out.export_decisions_to_csv(decision_rows, seed,
                                                           output_path=run_dir))

    if cfg.write_traces:
        label = f"{cfg.method}_{cfg.task}_seed{seed}"
        if last_train is not None and len(last_train):
            write_trajectory_jsonl(last_train, run_dir / f"trace_seed{seed}_train_last.jsonl",
                                   run.disc, label=label)
        if first_eval is not None and len(first_eval):
            write_trajectory_jsonl(first_eval, run_dir / f"trace_seed{seed}_eval0.jsonl",
                                   run.disc, label=label)

    save_checkpoint(
        run_dir / f"checkpoint_seed{seed}",
        networks={
            'actor': run.learner.actor.online,
            'actor_target': run.learner.actor.target,
            'critic': run.learner.critic.online,
            'critic_target': run.learner.critic.target,
            },
        optimizers={'actor': run.learner.actor_opt, 'critic': run.learner.critic_opt},
        seeds={'seed': int(seed), **ddpg.spawn_seeds(seed)},
        metadata={
            'method': cfg.method,
            'task': _task_dict(task),
            'robot': {**robot_defaults(), **cfg.robot},
            'steps_per_episode': cfg.steps_per_episode,
            'damage': {'operable': damage.operable.tolist(),
                       'leg_present': damage.leg_present.tolist()},
            'settings': settings,
            'behavior_enabled': cfg.behavior_enabled,
            })

    metrics_df = csv_out.prepare_metrics_for_csv(records)
    metrics = csv_out.run_metrics_from_frame(metrics_df, seed, cfg.method, cfg.task,
                                             cfg.steps_per_episode)
    metrics.decision_log_path = decision_log
    logger.info("seed %d finished in %.1fs: eval success %s", seed,
                time.perf_counter() - start, any(metrics.eval_success))
    return metrics


def _run_metadata(cfg, task, failures):
    return {
        'method': cfg.method,
        'task': cfg.task,
        'task_label': task.label,
        'preset': cfg.preset,
        'desk_verified': cfg.desk_verified,
        'allowed_steps': cfg.steps_per_episode,
        'episodes': cfg.episodes,
        'pretrain_episodes': cfg.pretrain_episodes,
        'eval_episodes': cfg.eval_episodes,
        'seeds': list(cfg.seeds),
        'oracle_threshold': task.oracle_threshold,
        'task_mode': _task_dict(task),
        'trial_granularity': cfg.trial_granularity,
        'evaluation_phase': EVALUATION_PHASE,
        'damage': asdict(cfg.damage),
        'behavior_enabled': cfg.behavior_enabled,
        'failed_seeds': {str(seed): error for seed, error in sorted(failures.items())},
        }


def run_experiment(cfg):
    """
    Run every seed of cfg, in a process pool when cfg.workers > 1.  A seed
    that raises is recorded as failed and the others continue.

    Returns
    -------
    list of RunMetrics
        One entry per seed, in seed order.
    """
    if not cfg.desk_verified:
        logger.warning("preset '%s' is not desk-verified; runs may take days", cfg.preset)

    run_dir = cfg.run_dir()
    run_dir.mkdir(parents=True, exist_ok=True)
    task = build_task(cfg, cfg.robot_config())
    logger.info("running %s on %s for seeds %s (oracle threshold %.4f)",
                cfg.method, task.label, cfg.seeds, task.oracle_threshold)

    results = {}
    failures = {}

    if cfg.workers > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(cfg.seeds))) as pool:
            futures = {pool.submit(run_seed, cfg, seed, task): seed for seed in cfg.seeds}
            for future in as_completed(futures):
                seed = futures[future]
                try:
                    results[seed] = future.result()
                except Exception as err:
                    logger.error("seed %d failed: %s", seed, err)
                    failures[seed] = f"{type(err).__name__}: {err}"
    else:
        for seed in cfg.seeds:
            try:
                results[seed] = run_seed(cfg, seed, task)
            except Exception as err:
                logger.error("seed %d failed: %s", seed, err)
                failures[seed] = f"{type(err).__name__}: {err}"

    csv_out.write_run_metadata(run_dir, _run_metadata(cfg, task, failures))

    metrics = []
    for seed in cfg.seeds:
        if seed in failures:
            metrics.append(RunMetrics(seed, cfg.method, cfg.task, cfg.steps_per_episode,
                                      failed=True, error=failures[seed]))
        else:
            metrics.append(results[seed])
    return metrics


def evaluate_checkpoint(stem, episodes=1, seed=0):
    """
    Run a saved controller for a number of evaluation episodes on the robot,
    task and damage stored with it.

    Returns
    -------
    pandas.DataFrame
        One metrics row per episode, phase 'eval'.
    """
    if episodes < 1:
        raise DomainError("evaluate_checkpoint needs at least one episode")
    checkpoint = load_checkpoint(stem)
    meta = checkpoint['metadata']

    robot = dict(meta['robot'])
    robot['max_steps'] = meta['steps_per_episode']
    config = hexsim.RobotConfig(**robot)
    task_values = dict(meta['task'])
    if task_values['target'] is not None:
        task_values['target'] = tuple(task_values['target'])
    task = hexsim.TaskMode(**task_values)
    damage = hexsim.DamageMask(np.array(meta['damage']['operable'], dtype=bool),
                               np.array(meta['damage']['leg_present'], dtype=bool))

    settings = meta['settings']
    learner = ddpg.build_learner(hexsim.observation_dim(config), config.num_joints,
                                 config.max_delta, settings, checkpoint['seeds']['seed'])
    networks = checkpoint['networks']
    learner.actor = replace(learner.actor, online=networks['actor'], target=networks['actor_target'])
    learner.critic = replace(learner.critic, online=networks['critic'],
                             target=networks['critic_target'])

    run = SeedRun(
        seed=seed,
        method=meta['method'],
        config=config,
        task=task,
        damage=damage,
        disc=DiscountSpec(settings['gamma']),
        learner=learner,
        controller_settings=ControllerSettings(
            threshold=settings['accept_threshold'],
            n_samples=settings['n_q_samples'],
            behavior_enabled=meta['behavior_enabled']))
    if run.is_srl:
        run.controller = new_controller(learner.controller_seed)

    records = [run.episode('eval', index, damage, train=False).record
               for index in range(episodes)]
    return csv_out.prepare_metrics_for_csv(records)
