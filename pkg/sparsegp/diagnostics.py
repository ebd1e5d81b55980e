#!/usr/bin/env python3
"""
Analysis instruments for trained sparse models: inducing-input addition
sweeps, clump detection, noise-bias reports, prediction metrics and
ARD relevance summaries.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import pdist

from sparsegp.data import content_hash
from sparsegp.errors import InternalConsistencyError, NotPositiveDefiniteError
from sparsegp.kernels import Hyperparameters
from sparsegp.models import (
    LOG_2PI,
    Method,
    NlmlBreakdown,
    PredictiveDistribution,
    SparseModel,
    heteroscedastic_diag,
    nlml,
    predict,
)

logger = logging.getLogger(__name__)

DEFAULT_CLUMP_THRESHOLD = 1e-2
DEFAULT_GRID_POINTS = 200
UNDERESTIMATION_RATIO = 0.5
SEVERE_UNDERESTIMATION_RATIO = 0.1
DUPLICATE_TOLERANCE_FACTOR = 10.0

_SWEEP_FAILURES = (NotPositiveDefiniteError, InternalConsistencyError, np.linalg.LinAlgError)


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Objective change from adding each grid point as one extra inducing input."""

    method: Method
    grid: np.ndarray
    baseline: NlmlBreakdown
    delta_total: np.ndarray
    delta_data_fit: np.ndarray
    delta_complexity: np.ndarray
    delta_trace: np.ndarray
    applied_jitter: np.ndarray
    num_points: int
    noise_variance: float
    failures: Dict[int, str] = field(default_factory=dict)

    def __len__(self):
        return self.grid.shape[0]

    def duplicate_tolerance(self) -> np.ndarray:
        """Per-candidate bound on |delta_total| when the candidate duplicates an inducing input."""
        return DUPLICATE_TOLERANCE_FACTOR * self.applied_jitter * self.num_points / self.noise_variance

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.grid, columns=[f"x{d}" for d in range(self.grid.shape[1])])
        frame["delta_total"] = self.delta_total
        frame["delta_data_fit"] = self.delta_data_fit
        frame["delta_complexity"] = self.delta_complexity
        frame["delta_trace"] = self.delta_trace
        frame["applied_jitter"] = self.applied_jitter
        return frame


def default_sweep_grid(model: SparseModel, n: int = DEFAULT_GRID_POINTS, include_inducing: bool = True,
                       dim: int = 0) -> np.ndarray:
    """
    Uniform grid over [min(X) - l, max(X) + l] along one input dimension.

    Other coordinates sit at the data mean. With include_inducing the
    existing inducing inputs are merged in so duplicate candidates are
    evaluated exactly.
    """
    if n < 1:
        raise ValueError(f"grid needs at least one point, got n={n}")
    X = model.dataset.X
    if not 0 <= dim < X.shape[1]:
        raise ValueError(f"sweep dimension {dim} out of range for d={X.shape[1]}")
    ell = model.hyper.lengthscales[dim]
    axis = np.linspace(X[:, dim].min() - ell, X[:, dim].max() + ell, n)
    grid = np.tile(X.mean(axis=0), (n, 1))
    grid[:, dim] = axis
    if include_inducing and model.inducing is not None:
        grid = np.vstack([grid, model.inducing.Z])
        grid = grid[np.argsort(grid[:, dim], kind="stable")]
    return grid


def _evaluate_candidate(model: SparseModel, z: np.ndarray) -> Tuple[Optional[NlmlBreakdown], float, Optional[str]]:
    augmented = model.with_params(inducing=model.inducing.append(z))
    try:
        return nlml(augmented), augmented.applied_jitter, None
    except _SWEEP_FAILURES as e:
        return None, np.nan, f"{type(e).__name__}: {e}"


def addition_sweep(model: SparseModel, grid=None, jobs: int = 1) -> SweepResult:
    """
    F(Z + {z}) - F(Z) for every candidate z, hyperparameters held fixed.

    Each candidate is a full re-factorization of the augmented model.
    Candidates that fail to factorize are recorded in `failures` with NaN
    deltas and the sweep continues.
    """
    if not model.method.is_sparse:
        raise ValueError("addition sweeps need a sparse model (FITC, VFE or DTC)")
    grid = default_sweep_grid(model) if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    if grid.shape[0] == 0:
        raise ValueError("sweep grid is empty")
    if grid.shape[1] != model.dataset.input_dim:
        raise ValueError(f"grid has d={grid.shape[1]} but model has d={model.dataset.input_dim}")

    baseline = nlml(model)
    if jobs == 1:
        results = [_evaluate_candidate(model, z) for z in grid]
    else:
        results = Parallel(n_jobs=jobs, backend="threading")(delayed(_evaluate_candidate)(model, z) for z in grid)

    K = grid.shape[0]
    deltas = np.full((4, K), np.nan)
    jitter = np.full(K, np.nan)
    failures = {}
    for i, (breakdown, applied, error) in enumerate(results):
        if error is not None:
            logger.error(f"Sweep candidate {i} at {grid[i].tolist()} failed: {error}")
            failures[i] = error
            continue
        delta = breakdown - baseline
        deltas[:, i] = [delta.total, delta.data_fit, delta.complexity_penalty, delta.trace_term]
        jitter[i] = applied

    worst = float(np.nanmax(deltas[0])) if K > len(failures) else float("nan")
    logger.info(f"Addition sweep over {K} candidates for {model.method.value} (M={model.num_inducing}): "
                f"{len(failures)} failures, largest delta {worst:.3g}")
    return SweepResult(
        method=model.method, grid=grid, baseline=baseline,
        delta_total=deltas[0], delta_data_fit=deltas[1], delta_complexity=deltas[2], delta_trace=deltas[3],
        applied_jitter=jitter, num_points=model.dataset.num_points,
        noise_variance=model.hyper.noise_variance, failures=failures,
    )


@dataclass(frozen=True)
class ClumpReport:
    """Single-linkage grouping of inducing inputs; indices are 0-based rows of Z."""

    clusters: Tuple[Tuple[int, ...], ...]
    effective_count: int
    min_pairwise_distance: float
    threshold: float

    @property
    def num_inducing(self) -> int:
        return sum(len(c) for c in self.clusters)

    @property
    def clumped(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(c for c in self.clusters if len(c) > 1)

    def to_dict(self) -> dict:
        return {
            "clusters": [list(c) for c in self.clusters],
            "effective_count": self.effective_count,
            "min_pairwise_distance": self.min_pairwise_distance,
            "threshold": self.threshold,
        }


def detect_clumps(Z, lengthscales, tau: float = DEFAULT_CLUMP_THRESHOLD) -> ClumpReport:
    """Cluster inducing inputs whose lengthscale-normalized distance chains within tau."""
    if not tau > 0:
        raise ValueError(f"clump threshold must be positive, got {tau}")
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    scaled = Z / np.asarray(lengthscales, dtype=float)
    M = scaled.shape[0]
    if M == 1:
        return ClumpReport(clusters=((0,),), effective_count=1, min_pairwise_distance=float("inf"), threshold=tau)

    distances = pdist(scaled)
    labels = fcluster(linkage(distances, method="single"), t=tau, criterion="distance")
    groups: Dict[int, List[int]] = {}
    for index, label in enumerate(labels):
        groups.setdefault(int(label), []).append(index)
    clusters = tuple(sorted(tuple(sorted(g)) for g in groups.values()))
    return ClumpReport(clusters=clusters, effective_count=len(clusters),
                       min_pairwise_distance=float(distances.min()), threshold=tau)


@dataclass(frozen=True)
class NoiseBiasReport:
    noise_std: Dict[str, float]
    ratios: Dict[str, float]
    ordering: Tuple[str, ...]
    flags: Tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "noise_std": dict(self.noise_std),
            "ratios": dict(self.ratios),
            "ordering": list(self.ordering),
            "flags": list(self.flags),
        }


def noise_bias_report(models: Union[Sequence[SparseModel], Mapping[str, SparseModel]]) -> NoiseBiasReport:
    """
    Compare each method's learned sigma_n against the FULL model's.

    Flags FITC when sigma_n(FITC) / sigma_n(FULL) < 0.5 (and separately
    < 0.1) and VFE when the ratio exceeds 1.
    """
    if isinstance(models, Mapping):
        labelled = dict(models)
    else:
        labelled = {}
        for model in models:
            label = model.method.value
            if label in labelled:
                raise ValueError(f"more than one {label} model; pass a mapping of labels to models")
            labelled[label] = model
    full = [m for m in labelled.values() if m.method is Method.FULL]
    if not full:
        raise ValueError("noise bias report needs a FULL model as the reference")
    reference = full[0]
    reference_hash = content_hash(reference.dataset)
    for label, model in labelled.items():
        if model.dataset is not reference.dataset and content_hash(model.dataset) != reference_hash:
            raise ValueError(f"model {label} was trained on a different dataset")

    noise_std = {label: m.hyper.noise_std for label, m in labelled.items()}
    ratios = {label: s / reference.hyper.noise_std for label, s in noise_std.items()}
    flags = []
    for label, model in labelled.items():
        ratio = ratios[label]
        if model.method is Method.FITC and ratio < UNDERESTIMATION_RATIO:
            flags.append(f"{label}: underestimates noise (ratio {ratio:.3g})")
            if ratio < SEVERE_UNDERESTIMATION_RATIO:
                flags.append(f"{label}: severe underestimation (ratio {ratio:.3g})")
        if model.method is Method.VFE and ratio > 1.0:
            flags.append(f"{label}: overestimates noise (ratio {ratio:.3g})")
    ordering = tuple(sorted(noise_std, key=lambda label: (noise_std[label], label)))
    for flag in flags:
        logger.warning(f"Noise bias: {flag}")
    return NoiseBiasReport(noise_std=noise_std, ratios=ratios, ordering=ordering, flags=tuple(flags))


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    smse: float
    nlpp: float
    nlml_per_datum: Optional[float] = None

    def to_dict(self) -> dict:
        return {"rmse": self.rmse, "smse": self.smse, "nlpp": self.nlpp, "nlml_per_datum": self.nlml_per_datum}


def evaluate(pred: PredictiveDistribution, y_test, y_train=None,
             training_nlml: Union[NlmlBreakdown, float, None] = None) -> MetricsReport:
    """
    RMSE, SMSE (normalized by the population variance of y_test) and mean
    negative log predictive probability under the observation variance.
    """
    y_test = np.asarray(y_test, dtype=float).reshape(-1)
    if y_test.shape[0] != len(pred):
        raise ValueError(f"prediction has {len(pred)} points but y_test has {y_test.shape[0]}")
    residual = y_test - pred.mean
    mse = float(np.mean(residual ** 2))
    variance = float(np.var(y_test))
    if variance == 0:
        raise ValueError("test targets have zero variance; SMSE is undefined")
    v = pred.observation_variance
    nlpp = float(np.mean(0.5 * (LOG_2PI + np.log(v)) + 0.5 * residual ** 2 / v))

    nlml_per_datum = None
    if training_nlml is not None:
        if y_train is None:
            raise ValueError("y_train is needed to normalize the training objective")
        total = training_nlml.total if isinstance(training_nlml, NlmlBreakdown) else float(training_nlml)
        nlml_per_datum = total / np.asarray(y_train).size
    return MetricsReport(rmse=float(np.sqrt(mse)), smse=mse / variance, nlpp=nlpp, nlml_per_datum=nlml_per_datum)


@dataclass(frozen=True)
class InverseLengthscaleReport:
    dimensions: Tuple[int, ...]
    inverse_lengthscales: Tuple[float, ...]
    dominance_ratio: Optional[float]

    def to_dict(self) -> dict:
        return {
            "dimensions": list(self.dimensions),
            "inverse_lengthscales": list(self.inverse_lengthscales),
            "dominance_ratio": self.dominance_ratio,
        }


def inverse_lengthscale_report(hyper: Hyperparameters, top: int = 10, dominant: int = 4) -> InverseLengthscaleReport:
    """Dimensions sorted by 1/l, largest first.

    dominance_ratio is the smallest of the leading `dominant` inverse
    lengthscales divided by the next one; None when d <= dominant.
    """
    inverse = 1.0 / hyper.lengthscales
    order = np.argsort(-inverse, kind="stable")
    ratio = None
    if inverse.size > dominant:
        ratio = float(inverse[order[dominant - 1]] / inverse[order[dominant]])
    shown = order[:top]
    return InverseLengthscaleReport(dimensions=tuple(int(i) for i in shown),
                                    inverse_lengthscales=tuple(float(inverse[i]) for i in shown),
                                    dominance_ratio=ratio)


def predictive_bands(model: SparseModel, grid=None, n: int = DEFAULT_GRID_POINTS) -> pd.DataFrame:
    """Mean with +/- 2 observation-std bands on a 1-D grid, plus FITC's input-dependent noise."""
    if model.dataset.input_dim != 1:
        raise ValueError("predictive bands are only defined for 1-D inputs")
    if grid is None:
        X = model.dataset.X[:, 0]
        ell = model.hyper.lengthscales[0]
        grid = np.linspace(X.min() - ell, X.max() + ell, n)
    grid = np.asarray(grid, dtype=float).reshape(-1)
    pred = predict(model, grid[:, None])
    band = 2.0 * np.sqrt(pred.observation_variance)
    frame = pd.DataFrame({
        "x": grid,
        "mean": pred.mean,
        "lower": pred.mean - band,
        "upper": pred.mean + band,
        "latent_variance": pred.latent_variance,
    })
    if model.method is Method.FITC:
        frame["heteroscedastic_noise"] = heteroscedastic_diag(grid[:, None], model.inducing, model.hyper, model.jitter)
    return frame
