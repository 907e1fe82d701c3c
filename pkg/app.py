#!/usr/bin/env python3
"""
Memchan - Memory Channel Tomography
Batch front end: simulate collision-model runs, estimate the interaction from datasets
or exact statistics, reproduce the delay-channel demo and sweep sample sizes.
"""

import argparse
import concurrent.futures
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from core.cartan import assemble, gauge_distance, kak_decompose
from core.errors import (
    EXIT_OK, EXIT_PIPELINE, ConfigError, DataFormatError, MemchanError, error_kind, exit_code_for,
)
from core.qcore import QubitState, nearest_rotation, swap_unitary
from estimators.recovery import (
    RecoveryThresholds, estimate_from_tables, estimate_interaction,
)
from estimators.tomography import (
    FrequencyTable, block_interior_mask, fit_single, shifted_tally, tally, unitarity_score,
)
from simulation.simulator import ExperimentConfig, oracle_tables, run_experiment
from utils import FileHandler, MemchanConfig, ReportGenerator, RunManifest

logger = logging.getLogger('memchan')

DEFAULT_N_LIST = '10000,100000,1000000'
ORDERED_SCORE_MIN = 0.95


def emit_error(code: int, kind: str, text: str):
    print(f'memchan-error code={code} kind={kind}: {text}', file=sys.stderr)


def load_config(args) -> MemchanConfig:
    """Config file (optional when --preset is given) validated against the schema"""
    if not args.config and not args.preset:
        raise ConfigError('either --config or --preset is required')
    mapping = FileHandler().read_config(args.config) if args.config else {}
    return MemchanConfig.from_mapping(mapping, preset=args.preset)


def _write_manifest(out_dir: Path, manifest: RunManifest) -> Path:
    handler = FileHandler()
    _, _, manifest_path, _ = handler.output_paths(out_dir)
    return handler.write_text(ReportGenerator().manifest_text(manifest.finish()), manifest_path)


def cmd_simulate(args) -> int:
    config = load_config(args)
    experiment = config.to_experiment(seed=args.seed, n_steps=args.n_steps)
    manifest = RunManifest('simulate', config_path=str(args.config or ''), seed=int(experiment.seed))

    dataset = run_experiment(experiment)
    handler = FileHandler()
    dataset_path, _, _, trajectory_path = handler.output_paths(args.out)
    handler.write_dataset(dataset, dataset_path)
    if handler.write_trajectory(dataset, trajectory_path):
        print(f'📈 memory trajectory -> {trajectory_path}')

    manifest.dataset_path = str(dataset_path)
    manifest.fingerprint = dataset.config_fingerprint
    _write_manifest(args.out, manifest)
    print(f'✅ simulate: {len(dataset)} records ({experiment.mode} mode, seed {experiment.seed}) -> {dataset_path}')
    return EXIT_OK


def _finish_estimate(args, result, fingerprint: str, ground_truth, command: str,
                     extra: Optional[Dict[str, Any]] = None, dataset_path: str = '') -> int:
    generator = ReportGenerator()
    report = generator.recovery_report(result, fingerprint, ground_truth=ground_truth)
    report.update(extra or {})
    handler = FileHandler()
    _, report_path, _, _ = handler.output_paths(args.out)
    handler.write_text(generator.key_value_text(report), report_path)
    _write_manifest(args.out, RunManifest(command, config_path=str(args.config or ''), dataset_path=dataset_path,
                                          report_path=str(report_path), fingerprint=fingerprint))

    if not result.success:
        issue = result.errors[0]
        emit_error(EXIT_PIPELINE, result.diagnostics.get('failed_kind', 'pipeline_error'),
                   f"stage {issue['stage']}: {issue['message']}")
        print(f'❌ {command}: pipeline aborted, report -> {report_path}')
        return EXIT_PIPELINE

    print(f'✅ {command}: branch = {result.branch}')
    if result.params is not None:
        print(f'   alpha = {np.round(result.params.alpha, 6).tolist()}')
        if 'gauge_distance' in report:
            print(f"   gauge distance to ground truth = {report['gauge_distance']:.3e}")
    if result.controlled is not None:
        print(f'   observed branch rotation (score {result.controlled.score:.4f}):')
        print(np.array2string(result.controlled.rotation, precision=4, suppress_small=True))
    for warning in result.warnings:
        print(f"⚠️  {warning['stage']}: {warning['message']} ({warning['details']})")
    print(f'   report -> {report_path}')
    return EXIT_OK


def cmd_estimate(args) -> int:
    config = load_config(args)
    dataset = FileHandler().read_dataset(args.dataset)
    experiment = config.to_experiment(seed=args.seed, n_steps=args.n_steps or len(dataset))
    expected = experiment.fingerprint()
    if dataset.config_fingerprint != expected:
        raise DataFormatError(f'dataset fingerprint {dataset.config_fingerprint[:16]}... does not match '
                              f'the config ({expected[:16]}...)')
    result = estimate_interaction(dataset, experiment.ensemble, experiment.povm, config.to_thresholds())
    return _finish_estimate(args, result, dataset.config_fingerprint, experiment.unitary(), 'estimate',
                            dataset_path=str(args.dataset))


def cmd_oracle(args) -> int:
    config = load_config(args)
    experiment = config.to_experiment(seed=args.seed, n_steps=args.n_steps)
    ensemble, povm = experiment.ensemble, experiment.povm
    u = experiment.unitary()
    stats, conditional = oracle_tables(u, experiment.initial_memory, ensemble, povm)
    single = FrequencyTable.from_probabilities(stats.probs, ensemble.weights)
    tables = {a: FrequencyTable.from_probabilities(p, ensemble.weights) for a, p in conditional.items()}
    result = estimate_from_tables(single, tables, ensemble, povm, RecoveryThresholds.for_exact_input())
    extra = {
        'oracle.xi_bar': stats.xi_bar.bloch,
        'oracle.initial_state_dependent': stats.initial_state_dependent,
        'oracle.true_alpha': kak_decompose(u).alpha,
    }
    return _finish_estimate(args, result, 'oracle:' + experiment.fingerprint(), u, 'oracle', extra)


def delay_demo(n_steps: int, seed: int, block_size: int, memory: QubitState, ensemble, povm) -> Dict[str, Any]:
    """SWAP memory: random settings look like complete noise, ordered blocks look noiseless"""
    swap = swap_unitary()
    common = dict(interaction=swap, initial_memory=memory, ensemble=ensemble, povm=povm, n_steps=n_steps, seed=seed)
    random_data = run_experiment(ExperimentConfig(mode='random', **common))
    ordered_data = run_experiment(ExperimentConfig(mode='ordered', block_size=block_size, **common))

    random_map = fit_single(tally(random_data, ensemble.size, povm.size), ensemble, povm).channel
    interior = block_interior_mask(n_steps, block_size)
    ordered_map = fit_single(tally(ordered_data, ensemble.size, povm.size, mask=interior), ensemble, povm).channel
    ordered_score = unitarity_score(ordered_map)

    shifted = shifted_tally(random_data, ensemble.size, povm.size)
    tv = shifted.total_variation(povm.probabilities(ensemble.bloch_matrix()))
    bound = 3.0 / np.sqrt(np.maximum(shifted.setting_counts, 1))
    random_norm = float(np.linalg.norm(random_map.T, 2))
    noise_bound = 0.05 * max(1.0, float(np.sqrt(1e5 / n_steps)))
    return {
        'demo.n_steps': n_steps,
        'demo.seed': seed,
        'demo.block_size': block_size,
        'random.T': random_map.T,
        'random.t': random_map.t,
        'random.T_norm': random_norm,
        'ordered.T': ordered_map.T,
        'ordered.t': ordered_map.t,
        'ordered.unitarity_score': ordered_score,
        'ordered.v_hat.rotation': nearest_rotation(ordered_map.T),
        'shift.tv_per_setting': tv,
        'shift.bound_per_setting': bound,
        'checks.random_is_complete_noise': random_norm <= noise_bound,
        'checks.ordered_is_unitary': ordered_score >= ORDERED_SCORE_MIN,
        'checks.shift_matches_input': bool(np.all(tv <= bound)),
    }


def cmd_demo_delay(args) -> int:
    config = load_config(args) if (args.config or args.preset) else MemchanConfig()
    n_steps = args.n_steps or 100000
    seed = args.seed if args.seed is not None else config.run.seed
    report = delay_demo(n_steps, seed, args.block_size, QubitState(config.memory.bloch),
                        config.build_ensemble(), config.build_povm())

    generator = ReportGenerator()
    handler = FileHandler()
    _, report_path, _, _ = handler.output_paths(args.out)
    handler.write_text(generator.key_value_text(report, title='memchan-demo-delay'), report_path)
    _write_manifest(args.out, RunManifest('demo-delay', config_path=str(args.config or ''), seed=seed,
                                          report_path=str(report_path)))

    print(f'🔁 delay channel (SWAP memory), n = {n_steps}')
    print(f"   random  settings: |T| = {report['random.T_norm']:.4f}  -> complete noise")
    print(f"   ordered settings: score = {report['ordered.unitarity_score']:.4f}  -> noiseless")
    print(f"   shift by one: max TV = {np.max(report['shift.tv_per_setting']):.4f}")
    for key in ('checks.random_is_complete_noise', 'checks.ordered_is_unitary', 'checks.shift_matches_input'):
        print(f"   {'✅' if report[key] else '⚠️ '} {key.split('.', 1)[1]}")
    print(f'   report -> {report_path}')
    return EXIT_OK


def sweep_job(config_dump: Dict[str, Any], instance: int, n_steps: int) -> Dict[str, Any]:
    """One (instance, n) cell of the sweep; runs in a worker process"""
    config = MemchanConfig.model_validate(config_dump)
    if config.interaction.kind == 'random-regular':
        interaction = config.interaction.model_copy(update={'seed': config.interaction.seed + instance})
        config = config.model_copy(update={'interaction': interaction})
    seed = config.run.seed + instance
    experiment = config.to_experiment(seed=seed, n_steps=n_steps)
    result = estimate_interaction(run_experiment(experiment), experiment.ensemble, experiment.povm,
                                  config.to_thresholds())
    truth = experiment.unitary()
    row = {'instance': instance, 'seed': seed, 'n_steps': n_steps, 'branch': result.branch,
           'gauge_distance': np.nan, 'alpha_error': np.nan,
           'score': result.diagnostics.get('unitarity_score', np.nan)}
    if result.params is not None:
        row['gauge_distance'] = gauge_distance(assemble(result.params), truth)
        row['alpha_error'] = float(np.linalg.norm(result.params.alpha - kak_decompose(truth).alpha))
    return row


def cmd_sweep(args) -> int:
    config = load_config(args)
    n_list = [int(v) for v in args.n_list.split(',') if v.strip()]
    if not n_list or min(n_list) < 1:
        raise ConfigError('--n-list needs positive integers', field_path='n_list')
    jobs = [(i, n) for i in range(args.instances) for n in n_list]
    dump = config.model_dump()
    rows: List[Dict[str, Any]] = []
    if args.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as executor:
            futures = [executor.submit(sweep_job, dump, i, n) for i, n in jobs]
            for done, future in enumerate(concurrent.futures.as_completed(futures), 1):
                rows.append(future.result())
                print(f'\r   sweep: {done}/{len(jobs)} jobs', end='', flush=True)
        print()
    else:
        for i, n in jobs:
            rows.append(sweep_job(dump, i, n))
    rows.sort(key=lambda r: (r['instance'], r['n_steps']))

    generator = ReportGenerator()
    handler = FileHandler()
    out = Path(args.out)
    sweep_path = handler.write_text(generator.sweep_csv(rows), out / 'sweep.csv')
    _write_manifest(out, RunManifest('sweep', config_path=str(args.config or ''), report_path=str(sweep_path),
                                     seed=config.run.seed))
    print(f'📊 sweep: {len(rows)} jobs -> {sweep_path}')
    print(generator.sweep_summary(rows).to_string())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='memchan', description='Memory channel tomography with randomized inputs')
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging on stderr')
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p: argparse.ArgumentParser):
        p.add_argument('--config', type=str, help='key = value configuration file')
        p.add_argument('--preset', type=str, help='identity | delay-swap | controlled-not | controlled-z | random-regular')
        p.add_argument('--out', type=str, default='results', help='output directory')
        p.add_argument('--seed', type=int, help='overrides run.seed')
        p.add_argument('--n-steps', type=int, help='overrides run.n_steps')
        return p

    common(sub.add_parser('simulate', help='run the collision model and write a dataset')).set_defaults(func=cmd_simulate)
    estimate = common(sub.add_parser('estimate', help='recover the interaction from a dataset'))
    estimate.add_argument('--dataset', type=str, required=True)
    estimate.set_defaults(func=cmd_estimate)
    common(sub.add_parser('oracle', help='recover the interaction from exact statistics')).set_defaults(func=cmd_oracle)
    demo = common(sub.add_parser('demo-delay', help='ordered vs random inputs on the SWAP memory'))
    demo.add_argument('--block-size', type=int, default=100)
    demo.set_defaults(func=cmd_demo_delay)
    sweep = common(sub.add_parser('sweep', help='gauge distance vs n over random instances'))
    sweep.add_argument('--instances', type=int, default=20)
    sweep.add_argument('--n-list', type=str, default=DEFAULT_N_LIST)
    sweep.add_argument('--workers', type=int, default=1)
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    # Library logs stay quiet by default so a failure's first stderr line is the error line.
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.ERROR,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s', stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except (MemchanError, FileNotFoundError) as error:
        code = exit_code_for(error)
        emit_error(code, error_kind(error), str(error))
        return code


if __name__ == '__main__':
    sys.exit(main())
