#!/usr/bin/env python3
"""
Experiment studies
One function per named study. Each trains what it needs, runs its
diagnostics and returns run records plus plot series; `run` loads the data,
dispatches and writes the manifest.
"""

import logging
import time
import traceback
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from config.config import get_dataset_config
from pipelines.experiment_config import ExperimentConfig
from pipelines.results_writer import STATUS_FAILED, STATUS_OK, RunManifest, run_directory, write_results
from sparsegp import __version__
from sparsegp.data import (
    DataSource,
    SyntheticSpec,
    TransformRecord,
    content_hash,
    load_xy,
    sample_gp,
    standardize,
    subset,
)
from sparsegp.diagnostics import (
    addition_sweep,
    default_sweep_grid,
    detect_clumps,
    evaluate,
    inverse_lengthscale_report,
    noise_bias_report,
    predictive_bands,
)
from sparsegp.errors import DataIngestionError, InternalConsistencyError, NotPositiveDefiniteError, TrainingError, UsageError
from sparsegp.kernels import Hyperparameters
from sparsegp.models import Dataset, InducingSet, Method, SparseModel, nlml, predict
from sparsegp.training import (
    InitScheme,
    MultistartResult,
    OptimizerConfig,
    RestartOutcome,
    default_hyperparameters,
    nested_subsets,
    optimize,
    optimize_multistart,
    select_best,
)
from sparsegp.utils.result_formatter import format_model, format_trace, series_from_frame, to_builtin
from sparsegp.utils.validation import log_issues, validate_dataset, validate_inducing

logger = logging.getLogger(__name__)

RUN_FAILURES = (TrainingError, ValueError, NotPositiveDefiniteError, InternalConsistencyError, np.linalg.LinAlgError)


@dataclass
class LoadedData:
    train: Dataset
    test: Optional[Dataset]
    description: Dict[str, Any]
    transform: Optional[TransformRecord] = None
    truth: Optional[Hyperparameters] = None


@dataclass
class StudyResult:
    runs: List[Dict[str, Any]] = field(default_factory=list)
    series: Dict[str, Dict[str, List[Any]]] = field(default_factory=dict)
    reports: Dict[str, Any] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------

def _entry_value(entry: Dict[str, Any], key: str, field_path: str):
    if key not in entry:
        raise UsageError(f"{field_path}.{key}", "is required for this data source")
    return entry[key]


def _load_entry(entry: Dict[str, Any], field_path: str, seed: int,
                config: ExperimentConfig) -> Tuple[Dataset, Optional[Dataset], Optional[Hyperparameters]]:
    """Train/test datasets (and true hyperparameters for synthetic draws) from a source entry."""
    kind = entry.get('kind')
    if kind == 'synthetic':
        dim = int(_entry_value(entry, 'dim', field_path))
        n_train = int(_entry_value(entry, 'n_train', field_path))
        n_test = int(_entry_value(entry, 'n_test', field_path))
        try:
            truth = Hyperparameters.create(
                float(entry.get('signal_variance', 1.0)),
                np.full(dim, float(entry.get('lengthscale', 1.0))),
                float(entry.get('noise_variance', 0.01)),
            )
            spec = SyntheticSpec(
                dim=dim,
                n_train=n_train,
                n_test=n_test,
                hyper=truth,
                input_distribution=str(entry.get('input_distribution', 'GAUSSIAN')).upper(),
                input_scale=float(entry.get('input_scale', 1.0)),
                seed=int(entry.get('seed', seed)),
                jitter=config.jitter,
            )
        except ValueError as e:
            raise UsageError(field_path, str(e))
        return sample_gp(spec)

    if kind == 'snelson':
        source = DataSource.snelson(_entry_value(entry, 'inputs_path', field_path),
                                    _entry_value(entry, 'outputs_path', field_path))
    elif kind == 'xy':
        source = DataSource.xy(_entry_value(entry, 'path', field_path), entry.get('delimiter'))
    elif kind == 'table':
        columns = _entry_value(entry, 'input_columns', field_path)
        columns = list(range(columns)) if isinstance(columns, int) else list(columns)
        source = DataSource.table(_entry_value(entry, 'path', field_path), columns,
                                  int(_entry_value(entry, 'target_column', field_path)), entry.get('delimiter'))
    else:
        raise UsageError(f"{field_path}.kind", f"must be one of snelson, xy, table, synthetic; got {kind!r}")

    dataset = load_xy(source)
    n_train = entry.get('n_train')
    if n_train is None:
        return dataset, None, None
    n_test = entry.get('n_test', dataset.num_points - n_train)
    if n_train + n_test > dataset.num_points:
        raise DataIngestionError(f"train/test split {n_train}+{n_test} exceeds the {dataset.num_points} rows",
                                 path=source.path)
    train = Dataset(dataset.X[:n_train], dataset.y[:n_train])
    test = Dataset(dataset.X[n_train:n_train + n_test], dataset.y[n_train:n_train + n_test]) if n_test > 0 else None
    return train, test, None


def load_data(config: ExperimentConfig) -> LoadedData:
    """
    Resolve, load, subset and optionally standardize an experiment's data

    Raises:
        DataIngestionError: missing or unreadable data
        UsageError: invalid data settings
    """
    data = config.data
    if data.dataset is not None:
        try:
            entry = get_dataset_config(data.dataset)
        except FileNotFoundError as e:
            raise DataIngestionError(str(e))
        field_path = f"datasets.{data.dataset}"
    else:
        entry = dict(data.source)
        field_path = 'data.source'

    logger.info(f"📂 Loading data ({data.dataset or entry.get('kind')})")
    train, test, truth = _load_entry(entry, field_path, config.seed, config)
    if data.test is not None:
        test, _, _ = _load_entry(dict(data.test), 'data.test', config.seed, config)

    if data.subset is not None:
        if data.subset.n > train.num_points:
            raise UsageError('data.subset.n', f"asks for {data.subset.n} points but the data has {train.num_points}")
        train = subset(train, data.subset.n, data.subset.rule, data.subset.seed)

    transform = None
    if data.standardize:
        try:
            train, transform = standardize(train)
        except ValueError as e:
            raise DataIngestionError(f"cannot standardize training data: {e}")
        if test is not None:
            test = transform.apply(test)

    is_valid, issues = validate_dataset(train, 'training data')
    log_issues(issues, 'data check')
    if not is_valid:
        raise DataIngestionError(f"training data is unusable: {'; '.join(issues)}")

    description = {
        'name': data.dataset,
        'source': {k: v for k, v in entry.items()},
        'num_points': train.num_points,
        'input_dim': train.input_dim,
        'content_hash': content_hash(train),
        'test_points': test.num_points if test is not None else 0,
        'test_content_hash': content_hash(test) if test is not None else None,
        'subset': None if data.subset is None else {
            'n': data.subset.n, 'rule': data.subset.rule.value, 'seed': data.subset.seed},
        'standardized': transform is not None,
        'transform': transform.to_dict() if transform is not None else None,
        'true_hyperparameters': truth.to_dict() if truth is not None else None,
    }
    logger.info(f"✅ Data ready: N={train.num_points}, d={train.input_dim}, test={description['test_points']}")
    return LoadedData(train=train, test=test, description=description, transform=transform, truth=truth)


# ---------------------------------------------------------------------------
# Run records
# ---------------------------------------------------------------------------

def _failed_run(name: str, method: Optional[Method], num_inducing: Optional[int], error: BaseException) -> Dict[str, Any]:
    logger.error(f"❌ {name} failed: {type(error).__name__}: {error}")
    logger.debug(traceback.format_exc())
    return {
        'name': name,
        'status': STATUS_FAILED,
        'method': method.value if method is not None else None,
        'num_inducing': num_inducing,
        'error': f"{type(error).__name__}: {error}",
    }


def _metrics(model: SparseModel, data: LoadedData, dataset: Optional[Dataset] = None) -> Dict[str, Any]:
    """Test metrics in original target units, falling back to the training set."""
    train = dataset or model.dataset
    target = data.test if data.test is not None else train
    pred = predict(model, target.X)
    y = target.y
    if data.transform is not None:
        pred = data.transform.unstandardize_prediction(pred)
        y = data.transform.unstandardize_targets(y)
    report = evaluate(pred, y, train.y, nlml(model))
    metrics = report.to_dict()
    metrics['evaluated_on'] = 'test' if data.test is not None else 'train'
    return metrics


def _restart_summary(outcomes: List[RestartOutcome]) -> List[Dict[str, Any]]:
    return [{
        'seed': o.seed,
        'status': STATUS_OK if o.succeeded else STATUS_FAILED,
        'final_objective': o.final_objective if o.succeeded else None,
        'error': None if o.succeeded else f"{type(o.error).__name__}: {o.error}",
    } for o in outcomes]


def _inducing_issues(name: str, model: SparseModel) -> List[str]:
    if model.inducing is None:
        return []
    _, issues = validate_inducing(model.inducing, model.dataset)
    log_issues(issues, f"{name} inducing inputs")
    return issues


def _model_record(name: str, model: SparseModel, data: LoadedData, best: RestartOutcome,
                  outcomes: List[RestartOutcome]) -> Dict[str, Any]:
    record = {'name': name, 'status': STATUS_OK}
    record.update(format_model(model))
    record['inducing_issues'] = _inducing_issues(name, model)
    record['trace'] = format_trace(best.trace)
    record['restarts'] = _restart_summary(outcomes)
    record['metrics'] = _metrics(model, data)
    return record


def _train(name: str, data: LoadedData, method: Method, M: Optional[int], config: ExperimentConfig,
           scheme: Optional[InitScheme] = None, optimizer: Optional[OptimizerConfig] = None,
           dataset: Optional[Dataset] = None, jobs: Optional[int] = None
           ) -> Tuple[Dict[str, Any], Optional[SparseModel], Optional[MultistartResult]]:
    """Multi-start training of one method; failures become a failed record."""
    dataset = dataset or data.train
    scheme = scheme or InitScheme.parse('RANDOM_SUBSET' if config.init == 'NESTED' else config.init)
    logger.info(f"🚀 Training {name} ({method.value}, M={M if method.is_sparse else '-'})")
    try:
        result = optimize_multistart(dataset, M or 1, method, optimizer or config.optimizer, scheme,
                                     config.jobs if jobs is None else jobs, config.jitter)
        best = RestartOutcome(seed=result.best_seed, model=result.best_model, trace=result.best_trace)
        record = _model_record(name, result.best_model, data, best, result.outcomes)
    except RUN_FAILURES as e:
        return _failed_run(name, method, M, e), None, None
    logger.info(f"✅ {name}: objective {record['breakdown']['total']:.6g}, sigma_n {record['noise_std']:.4g}")
    return record, result.best_model, result


def _bands_series(result: StudyResult, name: str, model: SparseModel):
    if model.dataset.input_dim != 1:
        return
    result.series[f"bands_{name}"] = series_from_frame(predictive_bands(model))
    if model.inducing is not None:
        result.series[f"inducing_{name}"] = {'x0': to_builtin(model.inducing.Z[:, 0])}


def _training_data_series(result: StudyResult, dataset: Dataset):
    if dataset.input_dim == 1:
        result.series['training_data'] = {'x': to_builtin(dataset.X[:, 0]), 'y': to_builtin(dataset.y)}


def _noise_bias(result: StudyResult, models: Dict[str, SparseModel]):
    if 'FULL' not in models or len(models) < 2:
        return
    report = noise_bias_report(models)
    result.reports['noise_bias'] = report.to_dict()
    logger.info(f"📊 Noise std ordering: {' < '.join(report.ordering)}")


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------

def fit_study(config: ExperimentConfig, data: LoadedData) -> StudyResult:
    """Train each method (and each M for sparse methods) and report metrics."""
    result = StudyResult()
    models = {}
    for method in config.methods:
        sizes = config.num_inducing if method.is_sparse else (None,)
        for M in sizes:
            name = method.value if (not method.is_sparse or len(sizes) == 1) else f"{method.value}-M{M}"
            record, model, _ = _train(name, data, method, M, config)
            result.runs.append(record)
            if model is not None:
                models[name] = model
                _bands_series(result, name, model)
    _training_data_series(result, data.train)
    _noise_bias(result, models)
    return result


def sweep_add_study(config: ExperimentConfig, data: LoadedData) -> StudyResult:
    """Train each sparse method at fixed M, then sweep one extra inducing input over a grid."""
    result = StudyResult()
    M = config.single_num_inducing
    grid_points = config.options.get('grid_points', 200)
    include_inducing = config.options.get('include_inducing', True)
    for method in config.methods:
        name = method.value
        record, model, _ = _train(name, data, method, M, config)
        if model is not None:
            try:
                sweep = addition_sweep(model, default_sweep_grid(model, grid_points, include_inducing), config.jobs)
            except RUN_FAILURES as e:
                record = _failed_run(name, method, M, e)
            else:
                record['sweep'] = {
                    'baseline': sweep.baseline.to_dict(),
                    'grid_points': len(sweep),
                    'max_delta_total': float(np.nanmax(sweep.delta_total)),
                    'min_delta_total': float(np.nanmin(sweep.delta_total)),
                    'failures': {str(i): msg for i, msg in sweep.failures.items()},
                }
                result.series[f"sweep_{name}"] = series_from_frame(sweep.to_frame())
                _bands_series(result, name, model)
                logger.info(f"📊 {name} sweep: delta_total in [{record['sweep']['min_delta_total']:.3g}, "
                            f"{record['sweep']['max_delta_total']:.3g}]")
        result.runs.append(record)
    _training_data_series(result, data.train)
    return result


def clump_study(config: ExperimentConfig, data: LoadedData) -> StudyResult:
    """Train at M inducing inputs from a random subset and report clumping and noise bias."""
    result = StudyResult()
    M = config.single_num_inducing
    tau = config.options.get('clump_threshold', 1e-2)
    models = {}
    for method in config.methods:
        name = method.value
        record, model, _ = _train(name, data, method, M, config)
        if model is not None:
            models[name] = model
            if model.inducing is not None:
                clumps = detect_clumps(model.inducing.Z, model.hyper.lengthscales, tau)
                record['clumps'] = clumps.to_dict()
                logger.info(f"📊 {name}: {clumps.effective_count} effective inducing inputs out of {M}")
            _bands_series(result, name, model)
        result.runs.append(record)
    _training_data_series(result, data.train)
    _noise_bias(result, models)
    return result


def recover_zx_study(config: ExperimentConfig, data: LoadedData) -> StudyResult:
    """Start sparse methods at Z = X with the trained full-GP hyperparameters and optimize."""
    result = StudyResult()
    tau = config.options.get('clump_threshold', 1e-3)
    train = data.train
    full_record, full_model, full_result = _train('FULL', data, Method.FULL, None, config)
    result.runs.append(full_record)
    rows = {'method': [], 'initial_objective': [], 'final_objective': []}
    if full_model is not None:
        result.series['trace_FULL'] = series_from_frame(full_result.best_trace.to_frame()[['iteration', 'objective']])
        rows['method'].append('FULL')
        rows['initial_objective'].append(full_result.best_trace.initial_objective)
        rows['final_objective'].append(full_result.best_trace.final_objective)

    for method in config.methods:
        if not method.is_sparse:
            continue
        name = method.value
        if full_model is None:
            result.runs.append(_failed_run(name, method, train.num_points,
                                           TrainingError("full GP reference run failed")))
            continue
        try:
            start = SparseModel(train, full_model.hyper, InducingSet(train.X), method, config.jitter)
            trained, trace = optimize(start, config.optimizer)
            clumps = detect_clumps(trained.inducing.Z, trained.hyper.lengthscales, tau)
        except RUN_FAILURES as e:
            result.runs.append(_failed_run(name, method, train.num_points, e))
            continue
        record = {'name': name, 'status': STATUS_OK}
        record.update(format_model(trained))
        record['inducing_issues'] = _inducing_issues(name, trained)
        record['trace'] = format_trace(trace)
        record['initial_objective'] = trace.initial_objective
        record['final_objective'] = trace.final_objective
        record['full_objective'] = full_record['breakdown']['total']
        record['clumps'] = clumps.to_dict()
        record['metrics'] = _metrics(trained, data)
        result.runs.append(record)
        result.series[f"trace_{name}"] = series_from_frame(trace.to_frame()[['iteration', 'objective']])
        rows['method'].append(name)
        rows['initial_objective'].append(trace.initial_objective)
        rows['final_objective'].append(trace.final_objective)
        logger.info(f"📊 {name}: {trace.initial_objective:.6g} -> {trace.final_objective:.6g}, "
                    f"{clumps.effective_count} effective inducing inputs (tau={tau:g})")
    if rows['method']:
        result.series['recover_zx'] = to_builtin(rows)
    return result


def _nested_restart(train: Dataset, method: Method, M: int, ladder: List[int], seed: int,
                    config: ExperimentConfig) -> RestartOutcome:
    try:
        inducing = nested_subsets(train, ladder, seed)[ladder.index(M)]
        model = SparseModel(train, default_hyperparameters(train), inducing, method, config.jitter)
        trained, trace = optimize(model, replace(config.optimizer, seed=seed))
        return RestartOutcome(seed=seed, model=trained, trace=trace)
    except RUN_FAILURES as e:
        logger.error(f"Restart {seed} of {method.value} at M={M} failed: {e}")
        return RestartOutcome(seed=seed, error=e)


def _regime_run(data: LoadedData, method: Method, M: int, ladder: List[int],
                config: ExperimentConfig) -> Tuple[Dict[str, Any], Optional[SparseModel]]:
    name = f"{method.value}-M{M}"
    if config.init != 'NESTED':
        record, model, _ = _train(name, data, method, M, config, jobs=1)
        return record, model
    seeds = [config.seed + r for r in range(config.optimizer.restarts)]
    outcomes = [_nested_restart(data.train, method, M, ladder, s, config) for s in seeds]
    try:
        best = select_best(outcomes, f"{name} restarts")
        record = _model_record(name, best.model, data, best, outcomes)
    except RUN_FAILURES as e:
        return _failed_run(name, method, M, e), None
    logger.info(f"✅ {name}: objective {record['breakdown']['total']:.6g}")
    return record, best.model


def regime_study(config: ExperimentConfig, data: LoadedData) -> StudyResult:
    """Sweep the number of inducing inputs over a ladder, with the full GP as reference."""
    result = StudyResult()
    N = data.train.num_points
    ladder = sorted(M for M in config.num_inducing if M <= N)
    skipped = [M for M in config.num_inducing if M > N]
    if skipped:
        logger.warning(f"⚠️ Skipping ladder entries {skipped} larger than N={N}")
    if not ladder:
        raise UsageError('num_inducing', f"no ladder entry is <= N={N}")

    rows = {'method': [], 'num_inducing': [], 'nlml_per_datum': [], 'noise_std': [], 'nlpp': [], 'smse': []}

    def add_row(record: Dict[str, Any], M: int):
        if record['status'] != STATUS_OK:
            return
        rows['method'].append(record['method'])
        rows['num_inducing'].append(M)
        rows['nlml_per_datum'].append(record['metrics']['nlml_per_datum'])
        rows['noise_std'].append(record['noise_std'])
        rows['nlpp'].append(record['metrics']['nlpp'])
        rows['smse'].append(record['metrics']['smse'])

    if Method.FULL in config.methods:
        record, _, _ = _train('FULL', data, Method.FULL, None, config)
        result.runs.append(record)
        add_row(record, N)

    tasks = [(method, M) for method in config.methods if method.is_sparse for M in ladder]
    if config.jobs == 1:
        outputs = [_regime_run(data, method, M, ladder, config) for method, M in tasks]
    else:
        outputs = Parallel(n_jobs=config.jobs, backend='threading')(
            delayed(_regime_run)(data, method, M, ladder, config) for method, M in tasks
        )
    for (method, M), (record, _) in zip(tasks, outputs):
        result.runs.append(record)
        add_row(record, M)

    result.series['regime'] = to_builtin(rows)
    return result


def ard_study(config: ExperimentConfig, data: LoadedData) -> StudyResult:
    """Full GP on a subset, FITC, VFE, VFE with frozen hyperparameters and VFE started from FITC."""
    result = StudyResult()
    M = config.single_num_inducing
    top = config.options.get('top_lengthscales', 10)
    frozen = config.options.get('frozen_iterations', 200)
    full_subset = config.options.get('full_subset')
    train = data.train

    sod = train
    if full_subset is not None:
        n = min(full_subset.n, train.num_points)
        sod = subset(train, n, full_subset.rule, full_subset.seed)

    configured = InitScheme.parse(config.init)
    protocol: List[Tuple[str, Method, Callable[[Dict[str, SparseModel]], Dict[str, Any]]]] = [
        ('GP (SoD)', Method.FULL, lambda done: {'dataset': sod}),
        ('FITC', Method.FITC, lambda done: {'scheme': configured}),
        ('VFE', Method.VFE, lambda done: {'scheme': configured}),
        ('VFE (frozen)', Method.VFE, lambda done: {
            'scheme': configured, 'optimizer': replace(config.optimizer, freeze_hyper_iterations=frozen)}),
        ('VFE (init FITC)', Method.VFE, lambda done: {'scheme': InitScheme.from_model(done['FITC'])}),
    ]

    table = {'row': [], 'nlml_per_datum': [], 'noise_variance': [], 'rmse': []}
    lengthscales = {'row': [], 'rank': [], 'dimension': [], 'inverse_lengthscale': []}
    done: Dict[str, SparseModel] = {}
    for name, method, settings in protocol:
        if name == 'VFE (init FITC)' and 'FITC' not in done:
            result.runs.append(_failed_run(name, method, M, TrainingError("FITC run failed; nothing to start from")))
            continue
        kwargs = settings(done)
        record, model, _ = _train(name, data, method, M, config, **kwargs)
        if model is not None:
            done[name] = model
            report = inverse_lengthscale_report(model.hyper, top)
            record['inverse_lengthscales'] = report.to_dict()
            table['row'].append(name)
            table['nlml_per_datum'].append(record['metrics']['nlml_per_datum'])
            table['noise_variance'].append(model.hyper.noise_variance)
            table['rmse'].append(record['metrics']['rmse'])
            for rank, (dim, value) in enumerate(zip(report.dimensions, report.inverse_lengthscales), start=1):
                lengthscales['row'].append(name)
                lengthscales['rank'].append(rank)
                lengthscales['dimension'].append(dim)
                lengthscales['inverse_lengthscale'].append(value)
        result.runs.append(record)

    result.series['ard_table'] = to_builtin(table)
    result.series['ard_lengthscales'] = to_builtin(lengthscales)
    return result


STUDIES: Dict[str, Callable[[ExperimentConfig, LoadedData], StudyResult]] = {
    'fit': fit_study,
    'sweep-add': sweep_add_study,
    'clump-study': clump_study,
    'recover-zx': recover_zx_study,
    'regime-study': regime_study,
    'ard-study': ard_study,
}


def run(config: ExperimentConfig, write: bool = True) -> RunManifest:
    """
    Execute the configured study and persist its manifest

    Args:
        config: validated experiment configuration
        write: write the manifest and result files under config.output_dir

    Returns:
        RunManifest; per-run failures are recorded in it rather than raised

    Raises:
        DataIngestionError: the data could not be loaded
        UsageError: a setting is invalid for the loaded data
    """
    started_at = datetime.now(timezone.utc).isoformat()
    clock = time.perf_counter()
    logger.info(f"🚀 Starting {config.name} (seed {config.seed})")

    data = load_data(config)
    study = STUDIES[config.name](config, data)

    manifest = RunManifest(
        experiment=config.name,
        config=config.to_dict(),
        dataset=data.description,
        toolkit_version=__version__,
        runs=study.runs,
        series=study.series,
        reports=study.reports,
        wall_clock={'started_at': started_at, 'seconds': time.perf_counter() - clock},
    )
    if write:
        write_results(manifest, run_directory(config.output_dir, config.name, config.seed))

    failed = len(manifest.failed_runs)
    if failed:
        logger.warning(f"⚠️ {config.name} finished with {failed} of {len(manifest.runs)} runs failed")
    else:
        logger.info(f"✅ {config.name} finished: {len(manifest.runs)} runs in {manifest.wall_clock['seconds']:.1f}s")
    return manifest
