"""
Code to handle run records into csv format, and to read them back.
"""
import json
import os
import pathlib

import numpy as np
import pandas as pd

from .errors import DomainError
from .metrics import ComparisonSummary, RunMetrics


METRICS_COLUMNS = [
    'phase',
    'episode',
    'steps',
    'return',
    'success',
    'first_success_step',
    'noise_variance',
    'critic_loss',
    'actor_loss',
    'accept_fraction',
    ]

DECISION_COLUMNS = [
    'episode',
    'step',
    'p_a',
    'decision',
    'selected_source',
    'q_mean_curr',
    'q_mean_prev',
    ]

PLOT_COLUMNS = [
    'method',
    'episode',
    'mean_return',
    'std_return',
    'min_return',
    'max_return',
    'n_seeds',
    'oracle_threshold',
    ]

COMPARISON_COLUMNS = [
    'task',
    'method_a',
    'method_b',
    'n_seeds',
    'success_rate_a',
    'success_rate_b',
    'rate_difference',
    'avg_first_success_a',
    'avg_first_success_b',
    'first_success_difference',
    'sign_wins',
    'sign_losses',
    'sign_ties',
    'sign_test_p',
    ]

RUN_METADATA = 'run_metadata.json'


def metrics_filename(seed):
    return f"metrics_seed{seed}.csv"


def decisions_filename(seed):
    return f"decisions_seed{seed}.csv"


def _output_dir(output_path):
    if output_path is None:
        output_path = pathlib.Path(os.getcwd())
    output_path = pathlib.Path(output_path)
    output_path.mkdir(parents=True, exist_ok=True)
    return output_path


def prepare_metrics_for_csv(episode_records):
    """
    Per-episode records (dicts keyed by METRICS_COLUMNS) as a dataframe.
    Missing values become NaN; success is written as 0/1.
    """
    metrics_df = pd.DataFrame.from_records(list(episode_records), columns=METRICS_COLUMNS)
    metrics_df['success'] = metrics_df['success'].astype(bool).astype(int)
    metrics_df['first_success_step'] = metrics_df['first_success_step'].astype('Int64')
    return metrics_df


def export_metrics_to_csv(
        episode_records,
        seed,
        output_path=None,
        export_csv=True):
    """
    Write metrics_seed<seed>.csv into output_path.

    returns the csv path, or the dataframe when export_csv is False
    """
    metrics_df = prepare_metrics_for_csv(episode_records)

    if not export_csv:
        return metrics_df

    csv_path = _output_dir(output_path) / metrics_filename(seed)
    metrics_df.to_csv(csv_path, index=False)
    return csv_path


def _first_steps(frame):
    return [None if pd.isna(v) else int(v) for v in frame['first_success_step']]


def run_metrics_from_frame(metrics_df, seed, method, task, allowed_steps):
    """Rebuild RunMetrics from a metrics dataframe; pretraining rows are ignored."""
    train = metrics_df[metrics_df['phase'] == 'train']
    evaluation = metrics_df[metrics_df['phase'] == 'eval']
    return RunMetrics(
        seed=int(seed),
        method=method,
        task=task,
        allowed_steps=int(allowed_steps),
        episode_returns=[float(v) for v in train['return']],
        episode_success=[bool(v) for v in train['success']],
        eval_returns=[float(v) for v in evaluation['return']],
        eval_success=[bool(v) for v in evaluation['success']],
        eval_first_success_steps=_first_steps(evaluation),
        train_first_success_steps=_first_steps(train))


def read_metrics_csv(csv_path):
    metrics_df = pd.read_csv(csv_path, dtype={'phase': str}, float_precision='round_trip')
    missing = set(METRICS_COLUMNS) - set(metrics_df.columns)
    if missing:
        raise DomainError(f"{csv_path} lacks columns {sorted(missing)}")
    metrics_df['first_success_step'] = metrics_df['first_success_step'].astype('Int64')
    return metrics_df


def prepare_decisions_for_csv(decision_records):
    """decision_records: (episode, DecisionRecord) pairs."""
    rows = [
        {
            'episode': episode,
            'step': record.step,
            'p_a': record.p_a,
            'decision': record.decision,
            'selected_source': record.selected_source,
            'q_mean_curr': record.q_mean_curr,
            'q_mean_prev': record.q_mean_prev,
        }
        for episode, record in decision_records]
    return pd.DataFrame.from_records(rows, columns=DECISION_COLUMNS)


def export_decisions_to_csv(
        decision_records,
        seed,
        output_path=None,
        export_csv=True):
    decisions_df = prepare_decisions_for_csv(decision_records)

    if not export_csv:
        return decisions_df

    csv_path = _output_dir(output_path) / decisions_filename(seed)
    decisions_df.to_csv(csv_path, index=False)
    return csv_path


def write_run_metadata(run_dir, metadata):
    path = _output_dir(run_dir) / RUN_METADATA
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(metadata, handle, indent=2, sort_keys=True)
    return path


def read_run_metadata(run_dir):
    path = pathlib.Path(run_dir) / RUN_METADATA
    if not path.exists():
        raise DomainError(f"no {RUN_METADATA} in {run_dir}")
    with open(path, encoding='utf-8') as handle:
        return json.load(handle)


def read_run_metrics(run_dir):
    """
    RunMetrics for every seed of a run directory, in seed order.  Seeds the
    metadata records as failed come back with failed=True.
    """
    run_dir = pathlib.Path(run_dir)
    meta = read_run_metadata(run_dir)
    failures = {int(seed): error for seed, error in meta.get('failed_seeds', {}).items()}

    runs = []
    for seed in sorted(int(s) for s in meta['seeds']):
        if seed in failures:
            runs.append(RunMetrics(seed, meta['method'], meta['task'], meta['allowed_steps'],
                                   failed=True, error=failures[seed]))
            continue
        metrics_df = read_metrics_csv(run_dir / metrics_filename(seed))
        run = run_metrics_from_frame(metrics_df, seed, meta['method'], meta['task'],
                                     meta['allowed_steps'])
        decisions = run_dir / decisions_filename(seed)
        if decisions.exists():
            run.decision_log_path = str(decisions)
        runs.append(run)
    return runs


def _per_seed_path(csv_path):
    csv_path = pathlib.Path(csv_path)
    return csv_path.with_name(csv_path.stem + '_per_seed.csv')


def write_comparison_csv(summaries, csv_path):
    """
    One row per ComparisonSummary in csv_path; per-seed areas under the
    return curve go to a sibling <stem>_per_seed.csv.
    """
    if isinstance(summaries, ComparisonSummary):
        summaries = [summaries]
    csv_path = pathlib.Path(csv_path)
    _output_dir(csv_path.parent)

    rows = [{name: getattr(s, name) for name in COMPARISON_COLUMNS} for s in summaries]
    pd.DataFrame.from_records(rows, columns=COMPARISON_COLUMNS).to_csv(csv_path, index=False)

    per_seed = [
        {'task': s.task, 'method_a': s.method_a, 'method_b': s.method_b,
         'seed': seed, 'auc_a': auc_a, 'auc_b': auc_b}
        for s in summaries for seed, auc_a, auc_b in s.per_seed_auc]
    pd.DataFrame.from_records(
        per_seed, columns=['task', 'method_a', 'method_b', 'seed', 'auc_a', 'auc_b']
        ).to_csv(_per_seed_path(csv_path), index=False)

    return csv_path


def read_comparison_csv(csv_path):
    """Inverse of write_comparison_csv; returns a list of ComparisonSummary."""
    csv_path = pathlib.Path(csv_path)
    summary_df = pd.read_csv(csv_path, dtype={'task': str, 'method_a': str, 'method_b': str},
                             float_precision='round_trip')

    per_seed_path = _per_seed_path(csv_path)
    per_seed_df = None
    if per_seed_path.exists():
        per_seed_df = pd.read_csv(per_seed_path, dtype={'task': str, 'method_a': str,
                                                        'method_b': str},
                                  float_precision='round_trip')

    int_fields = {'n_seeds', 'sign_wins', 'sign_losses', 'sign_ties'}
    str_fields = {'task', 'method_a', 'method_b'}
    summaries = []
    for row in summary_df.to_dict('records'):
        values = {}
        for name in COMPARISON_COLUMNS:
            if name in int_fields:
                values[name] = int(row[name])
            elif name in str_fields:
                values[name] = str(row[name])
            else:
                values[name] = float(row[name])
        if per_seed_df is not None:
            match = per_seed_df[(per_seed_df['task'] == values['task'])
                                & (per_seed_df['method_a'] == values['method_a'])
                                & (per_seed_df['method_b'] == values['method_b'])]
            values['per_seed_auc'] = [(int(r.seed), float(r.auc_a), float(r.auc_b))
                                      for r in match.itertuples()]
        summaries.append(ComparisonSummary(**values))
    return summaries


def plot_data(metrics, oracle_threshold=np.nan):
    """
    Per-method, per-episode mean / std / min / max of training returns
    across seeds.  Failed runs are left out.
    """
    rows = [
        {'method': run.method, 'episode': episode, 'return': value}
        for run in metrics if not run.failed
        for episode, value in enumerate(run.episode_returns)]
    if not rows:
        return pd.DataFrame(columns=PLOT_COLUMNS)

    grouped = pd.DataFrame.from_records(rows).groupby(['method', 'episode'])['return']
    plot_df = grouped.agg(
        mean_return='mean',
        std_return=lambda r: float(np.std(r)),
        min_return='min',
        max_return='max',
        n_seeds='count',
        ).reset_index()
    plot_df['oracle_threshold'] = oracle_threshold
    return plot_df[PLOT_COLUMNS]


def export_plot_data(
        run_dirs,
        output_path=None,
        export_csv=True):
    """
    Combine run directories into one plot-data csv (plot_data.csv).

    returns the csv path, or the dataframe when export_csv is False
    """
    frames = []
    for run_dir in run_dirs:
        meta = read_run_metadata(run_dir)
        frames.append(plot_data(read_run_metrics(run_dir),
                                meta.get('oracle_threshold', np.nan)))

    plot_df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=PLOT_COLUMNS)

    if not export_csv:
        return plot_df

    csv_path = _output_dir(output_path) / 'plot_data.csv'
    plot_df.to_csv(csv_path, index=False)
    return csv_path
