"""
Command line entry point.

    srlcrawler train --method srl --task x --seeds 0..9
    srlcrawler eval srl_runs/srl_x/checkpoint_seed0 --episodes 5
    srlcrawler compare --pair srl_runs/baseline_x srl_runs/srl_x
    srlcrawler emit-plot-data srl_runs/baseline_x srl_runs/srl_x --out plots
    srlcrawler variance-study --m 5 10 20 50 --out variance.csv
"""
import argparse
import logging
import pathlib
import sys

from . import csv_out
from .bayes_grad import SoftmaxBandit, estimator_variance_study, summarize_variance_study
from .config import load_experiment_config
from .errors import SrlError
from .harness import evaluate_checkpoint, run_experiment
from .metrics import avg_first_success, compare, overall_success, success_rate


logger = logging.getLogger(__name__)


def _add_train_arguments(parser):
    parser.add_argument('--config', type=pathlib.Path, help="TOML or JSON experiment file")
    parser.add_argument('--method', choices=['baseline', 'srl'])
    parser.add_argument('--task', choices=['x', 'xy', 'p2p'])
    parser.add_argument('--preset', choices=['desk', 'paper'])
    parser.add_argument('--episodes', type=int)
    parser.add_argument('--steps', dest='steps_per_episode', type=int)
    parser.add_argument('--seeds', help="'0..9', '1,4,7' or a single seed")
    parser.add_argument('--eval-episodes', type=int)
    parser.add_argument('--pretrain-episodes', type=int)
    parser.add_argument('--trial-granularity', choices=['run', 'episode'])
    parser.add_argument('--output-dir', type=pathlib.Path)
    parser.add_argument('--workers', type=int)
    parser.add_argument('--no-traces', action='store_true')
    parser.add_argument('--no-behavior', action='store_true',
                        help="SRL without the healthy-gait proposal (ablation)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog='srlcrawler',
        description="Survivable reinforcement learning on a damageable hexapod crawler.")
    parser.add_argument('-v', '--verbose', action='store_true', help="debug logging")
    commands = parser.add_subparsers(dest='command', required=True)

    train = commands.add_parser('train', help="train a seed battery")
    _add_train_arguments(train)

    evaluate = commands.add_parser('eval', help="evaluate a saved checkpoint")
    evaluate.add_argument('checkpoint', type=pathlib.Path, help="checkpoint stem")
    evaluate.add_argument('--episodes', type=int, default=5)
    evaluate.add_argument('--out', type=pathlib.Path, help="write the metrics to this csv")

    comparison = commands.add_parser('compare', help="compare run directories per task")
    comparison.add_argument('--pair', nargs=2, action='append', required=True,
                            metavar=('RUN_A', 'RUN_B'),
                            help="two run directories on the same task; repeat per task")
    comparison.add_argument('--granularity', choices=['run', 'episode'], default='run')
    comparison.add_argument('--out', type=pathlib.Path, default=pathlib.Path('comparison.csv'))

    plots = commands.add_parser('emit-plot-data', help="aggregate return curves for plotting")
    plots.add_argument('run_dirs', nargs='+', type=pathlib.Path)
    plots.add_argument('--out', type=pathlib.Path, default=None, help="output directory")

    study = commands.add_parser('variance-study', help="MC vs BQ gradient variance on a bandit")
    study.add_argument('--m', nargs='+', type=int, default=[5, 10, 20, 50])
    study.add_argument('--replicates', type=int, default=200)
    study.add_argument('--seed', type=int, default=0)
    study.add_argument('--theta', nargs='+', type=float, default=[0.2, -0.3])
    study.add_argument('--rewards', nargs='+', type=float, default=[1.0, 3.0])
    study.add_argument('--noise', type=float, default=0.5)
    study.add_argument('--out', type=pathlib.Path, default=pathlib.Path('variance_study.csv'))

    return parser


def _train(args):
    overrides = {
        'method': args.method,
        'task': args.task,
        'preset': args.preset,
        'episodes': args.episodes,
        'steps_per_episode': args.steps_per_episode,
        'seeds': args.seeds,
        'eval_episodes': args.eval_episodes,
        'pretrain_episodes': args.pretrain_episodes,
        'trial_granularity': args.trial_granularity,
        'output_dir': args.output_dir,
        'workers': args.workers,
        }
    if args.no_traces:
        overrides['write_traces'] = False
    if args.no_behavior:
        overrides['behavior_enabled'] = False

    cfg = load_experiment_config(args.config, **overrides)
    metrics = run_experiment(cfg)

    print(f"{cfg.method} on task {cfg.task}: {len(metrics)} seeds -> {cfg.run_dir()}")
    print(f"  success rate        {success_rate(metrics, cfg.trial_granularity):.3f}")
    print(f"  avg first success   {avg_first_success(metrics, cfg.trial_granularity):.3f}")
    failed = [m.seed for m in metrics if m.failed]
    if failed:
        print(f"  failed seeds        {failed}")
    return 1 if len(failed) == len(metrics) else 0


def _eval(args):
    metrics_df = evaluate_checkpoint(args.checkpoint, args.episodes)
    print(metrics_df[['episode', 'steps', 'return', 'success', 'first_success_step']]
          .to_string(index=False))
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        metrics_df.to_csv(args.out, index=False)
    return 0


def _compare(args):
    summaries = []
    for run_a, run_b in args.pair:
        a = csv_out.read_run_metrics(run_a)
        b = csv_out.read_run_metrics(run_b)
        summaries.append(compare(a, b, args.granularity))

    print(f"{'task':<6} {'method':<20} {'success':>8} {'first':>8} {'sign p':>8}")
    for s in summaries:
        print(f"{s.task:<6} {s.method_a:<20} {s.success_rate_a:>8.3f} {s.avg_first_success_a:>8.3f}")
        print(f"{s.task:<6} {s.method_b:<20} {s.success_rate_b:>8.3f} "
              f"{s.avg_first_success_b:>8.3f} {s.sign_test_p:>8.4f}")
    print(f"overall success  a {overall_success(summaries, 'a'):.3f}  "
          f"b {overall_success(summaries, 'b'):.3f}")

    csv_out.write_comparison_csv(summaries, args.out)
    logger.info("comparison written to %s", args.out)
    return 0


def _plot_data(args):
    path = csv_out.export_plot_data(args.run_dirs, output_path=args.out)
    print(f"plot data written to {path}")
    return 0


def _variance_study(args):
    problem = SoftmaxBandit(args.theta, args.rewards, args.noise)
    df = estimator_variance_study(problem, args.m, args.replicates, args.seed, args.out)
    summary = summarize_variance_study(df)
    print(summary[['estimator', 'M', 'component_index', 'bias', 'variance', 'mse']]
          .to_string(index=False))
    return 0


COMMANDS = {
    'train': _train,
    'eval': _eval,
    'compare': _compare,
    'emit-plot-data': _plot_data,
    'variance-study': _variance_study,
    }


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s %(name)s %(levelname)s %(message)s')
    try:
        return COMMANDS[args.command](args)
    except SrlError as err:
        logger.error("%s", err)
        return 2


if __name__ == '__main__':
    sys.exit(main())
