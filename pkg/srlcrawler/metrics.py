"""
Run metrics and the quantities compared between methods: success rate,
average normalized steps to first success, and a one-sided sign test on
the area under each seed's return curve.

A trial is, by default, one seeded run's evaluation phase (it succeeds if
any evaluation episode succeeds); with granularity 'episode' every
evaluation episode is its own trial.  Steps to first success count the
steps taken before the success step, so a trial that never succeeds is
the only way to score 1.0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import stats

from .errors import DomainError


@dataclass
class RunMetrics:
    seed: int
    method: str
    task: str
    allowed_steps: int
    episode_returns: List[float] = field(default_factory=list)
    episode_success: List[bool] = field(default_factory=list)
    eval_returns: List[float] = field(default_factory=list)
    eval_success: List[bool] = field(default_factory=list)
    eval_first_success_steps: List[Optional[int]] = field(default_factory=list)
    train_first_success_steps: List[Optional[int]] = field(default_factory=list)
    decision_log_path: Optional[str] = None
    failed: bool = False
    error: Optional[str] = None

    @property
    def steps_to_first_success(self):
        """Steps before success in the first successful evaluation episode."""
        for steps in self._trial_episodes()[2]:
            if steps is not None:
                return steps
        return None

    def _trial_episodes(self):
        # fall back to training episodes when no evaluation phase ran
        if self.eval_success:
            return self.eval_returns, self.eval_success, self.eval_first_success_steps
        return self.episode_returns, self.episode_success, self.train_first_success_steps

    def area_under_return_curve(self):
        returns = self.episode_returns or self.eval_returns
        return float(np.sum(returns)) if returns else 0.0


@dataclass
class ComparisonSummary:
    task: str
    method_a: str
    method_b: str
    n_seeds: int
    success_rate_a: float
    success_rate_b: float
    rate_difference: float
    avg_first_success_a: float
    avg_first_success_b: float
    first_success_difference: float
    sign_wins: int
    sign_losses: int
    sign_ties: int
    sign_test_p: float
    per_seed_auc: List[Tuple[int, float, float]] = field(default_factory=list)


def _trials(metrics, granularity):
    """(success, steps_before_success or None, allowed_steps) per trial."""
    if granularity not in ('run', 'episode'):
        raise DomainError(f"unknown trial granularity '{granularity}'")

    trials = []
    for run in metrics:
        if run.failed:
            trials.append((False, None, run.allowed_steps))
            continue
        _, success, first_steps = run._trial_episodes()
        if granularity == 'run':
            trials.append((bool(any(success)), run.steps_to_first_success, run.allowed_steps))
        else:
            trials.extend((bool(s), f, run.allowed_steps) for s, f in zip(success, first_steps))
    return trials


def success_rate(metrics, granularity='run'):
    """Successful trials over all trials."""
    trials = _trials(list(metrics), granularity)
    if not trials:
        raise DomainError("success rate of an empty trial set")
    return sum(1 for success, _, _ in trials if success) / len(trials)


def avg_first_success(metrics, granularity='run'):
    """
    Mean over trials of steps-before-first-success / allowed steps; trials
    that never succeed contribute 1.0.
    """
    trials = _trials(list(metrics), granularity)
    if not trials:
        raise DomainError("average first success of an empty trial set")
    ratios = [steps / allowed if success and steps is not None else 1.0
              for success, steps, allowed in trials]
    return float(np.mean(ratios))


def sign_test(wins, losses):
    """One-sided sign test p-value for 'wins exceed losses'; ties dropped."""
    n = wins + losses
    if n == 0:
        return 1.0
    return float(stats.binomtest(wins, n, 0.5, alternative='greater').pvalue)


def _label(runs):
    methods = sorted({run.method for run in runs})
    return methods[0] if len(methods) == 1 else '+'.join(methods)


def compare(a, b, granularity='run'):
    """
    Compare two seed batteries on the same task.  Differences are b - a and
    the sign test asks whether b's area under the return curve beats a's.
    """
    a = list(a)
    b = list(b)
    if not a or not b:
        raise DomainError("compare needs non-empty metric lists")

    tasks = {run.task for run in a} | {run.task for run in b}
    if len(tasks) != 1:
        raise DomainError(f"batteries cover different tasks: {sorted(tasks)}")
    seeds_a = sorted(run.seed for run in a)
    seeds_b = sorted(run.seed for run in b)
    if seeds_a != seeds_b:
        raise DomainError(f"seed batteries differ: {seeds_a} vs {seeds_b}")

    by_seed_b = {run.seed: run for run in b}
    per_seed = []
    wins = losses = ties = 0
    for run_a in sorted(a, key=lambda run: run.seed):
        auc_a = run_a.area_under_return_curve()
        auc_b = by_seed_b[run_a.seed].area_under_return_curve()
        per_seed.append((run_a.seed, auc_a, auc_b))
        if auc_b > auc_a:
            wins += 1
        elif auc_b < auc_a:
            losses += 1
        else:
            ties += 1

    rate_a = success_rate(a, granularity)
    rate_b = success_rate(b, granularity)
    first_a = avg_first_success(a, granularity)
    first_b = avg_first_success(b, granularity)

    return ComparisonSummary(
        task=tasks.pop(),
        method_a=_label(a),
        method_b=_label(b),
        n_seeds=len(seeds_a),
        success_rate_a=rate_a,
        success_rate_b=rate_b,
        rate_difference=rate_b - rate_a,
        avg_first_success_a=first_a,
        avg_first_success_b=first_b,
        first_success_difference=first_b - first_a,
        sign_wins=wins,
        sign_losses=losses,
        sign_ties=ties,
        sign_test_p=sign_test(wins, losses),
        per_seed_auc=per_seed)


def overall_success(summaries, side='b'):
    """Mean of per-task success rates for one side of a set of comparisons."""
    summaries = list(summaries)
    if not summaries:
        raise DomainError("overall success of no comparisons")
    attr = 'success_rate_b' if side == 'b' else 'success_rate_a'
    return float(np.mean([getattr(s, attr) for s in summaries]))
