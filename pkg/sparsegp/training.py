#!/usr/bin/env python3
"""
Joint optimization of hyperparameters and inducing inputs.

The parameter vector is [log s_f^2, log l (d entries, or 1 when tied),
log sigma_n^2, vec(Z)]; FULL models carry no Z block. Training uses
scipy's L-BFGS-B with the analytic gradient.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.optimize as so
from joblib import Parallel, delayed
from scipy.spatial.distance import pdist
from sklearn.cluster import KMeans

from sparsegp.data import make_rng
from sparsegp.errors import InternalConsistencyError, NotPositiveDefiniteError, TrainingError
from sparsegp.kernels import Hyperparameters, JitterPolicy
from sparsegp.models import Dataset, InducingSet, Method, NlmlBreakdown, SparseModel, nlml_grad

logger = logging.getLogger(__name__)

KMEANS_ITERATIONS = 25
_NUMERICAL_FAILURES = (NotPositiveDefiniteError, InternalConsistencyError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class OptimizerConfig:
    """
    Optimizer budget and schedule.

    gradient_tolerance defaults to 1e-6 * N when left as None.
    """

    max_iterations: int = 1000
    gradient_tolerance: Optional[float] = None
    objective_tolerance: float = 1e-9
    freeze_hyper_iterations: int = 0
    restarts: int = 1
    seed: int = 0
    memory: int = 10
    tie_lengthscales: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.gradient_tolerance is not None and not self.gradient_tolerance > 0:
            raise ValueError(f"gradient_tolerance must be positive, got {self.gradient_tolerance}")
        if not self.objective_tolerance > 0:
            raise ValueError(f"objective_tolerance must be positive, got {self.objective_tolerance}")
        if self.freeze_hyper_iterations < 0:
            raise ValueError(f"freeze_hyper_iterations must be >= 0, got {self.freeze_hyper_iterations}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.memory < 1:
            raise ValueError(f"memory must be >= 1, got {self.memory}")

    def gradient_tolerance_for(self, num_points: int) -> float:
        if self.gradient_tolerance is not None:
            return self.gradient_tolerance
        return 1e-6 * num_points

    @classmethod
    def from_dict(cls, values: Dict) -> "OptimizerConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown optimizer settings: {sorted(unknown)}")
        return cls(**values)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


class InitKind(str, Enum):
    RANDOM_SUBSET = "RANDOM_SUBSET"
    KMEANS = "KMEANS"
    GIVEN = "GIVEN"
    FROM_MODEL = "FROM_MODEL"


@dataclass(frozen=True, eq=False)
class InitScheme:
    kind: InitKind
    inducing: Optional[InducingSet] = None
    hyper: Optional[Hyperparameters] = None
    source_model: Optional[SparseModel] = None

    @classmethod
    def random_subset(cls) -> "InitScheme":
        return cls(InitKind.RANDOM_SUBSET)

    @classmethod
    def kmeans(cls) -> "InitScheme":
        return cls(InitKind.KMEANS)

    @classmethod
    def given(cls, Z, hyper: Optional[Hyperparameters] = None) -> "InitScheme":
        inducing = Z if isinstance(Z, InducingSet) else InducingSet(Z)
        return cls(InitKind.GIVEN, inducing=inducing, hyper=hyper)

    @classmethod
    def from_model(cls, model: SparseModel) -> "InitScheme":
        if model.inducing is None:
            raise ValueError("FROM_MODEL initialization needs a sparse model with an inducing set")
        return cls(InitKind.FROM_MODEL, inducing=model.inducing, hyper=model.hyper, source_model=model)

    @classmethod
    def parse(cls, value) -> "InitScheme":
        if isinstance(value, InitScheme):
            return value
        kind = InitKind(str(value).upper())
        if kind is InitKind.RANDOM_SUBSET:
            return cls.random_subset()
        if kind is InitKind.KMEANS:
            return cls.kmeans()
        raise ValueError(f"{kind.value} initialization needs explicit inducing inputs")


class TrainingStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITER = "max-iter"
    LINE_SEARCH_FAILURE = "line-search-failure"


@dataclass(frozen=True)
class InducingSummary:
    num_inducing: int
    centroid: Tuple[float, ...]
    min_pairwise_distance: float

    @classmethod
    def of(cls, inducing: Optional[InducingSet]) -> Optional["InducingSummary"]:
        if inducing is None:
            return None
        Z = inducing.Z
        min_dist = float(np.min(pdist(Z))) if Z.shape[0] > 1 else float("inf")
        return cls(Z.shape[0], tuple(float(v) for v in Z.mean(axis=0)), min_dist)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    phase: str
    objective: float
    breakdown: NlmlBreakdown
    gradient_norm: float
    hyper: Hyperparameters
    inducing: Optional[InducingSummary]
    parameters: np.ndarray = field(repr=False, compare=False, default=None)


@dataclass
class TrainingTrace:
    records: List[IterationRecord] = field(default_factory=list)
    status: TrainingStatus = TrainingStatus.CONVERGED
    message: str = ""
    seed: Optional[int] = None

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def final_objective(self) -> float:
        return float(np.min(self.objectives)) if self.records else float("inf")

    @property
    def best_record(self) -> IterationRecord:
        """Lowest-objective record; the earliest one on ties."""
        return self.records[int(np.argmin(self.objectives))]

    @property
    def initial_objective(self) -> float:
        return self.records[0].objective if self.records else float("inf")

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for r in self.records:
            row = {"iteration": r.iteration, "phase": r.phase, "objective": r.objective,
                   "gradient_norm": r.gradient_norm, "noise_variance": r.hyper.noise_variance,
                   "signal_variance": r.hyper.signal_variance}
            row.update({f"term_{k}": v for k, v in r.breakdown.to_dict().items() if k != "total"})
            if r.inducing is not None:
                row["min_pairwise_distance"] = r.inducing.min_pairwise_distance
            rows.append(row)
        return pd.DataFrame(rows)


def default_hyperparameters(dataset: Dataset) -> Hyperparameters:
    """s_f^2 = var(y), l_d = std of X per dimension, sigma_n^2 = 0.1 var(y)."""
    var_y = float(np.var(dataset.y))
    if not var_y > 0:
        var_y = 1.0
    ell = np.std(dataset.X, axis=0)
    ell = np.where(ell > 0, ell, 1.0)
    return Hyperparameters.create(var_y, ell, 0.1 * var_y)


def initialize(dataset: Dataset, M: int, scheme=None, seed: int = 0) -> Tuple[InducingSet, Hyperparameters]:
    """
    Initial inducing inputs and hyperparameters.

    RANDOM_SUBSET draws M training inputs without replacement (with
    replacement when M > N). KMEANS runs seeded Lloyd iterations on X and
    falls back to a random subset when M > N.
    """
    scheme = InitScheme.random_subset() if scheme is None else InitScheme.parse(scheme)
    if M < 1:
        raise ValueError(f"number of inducing inputs must be >= 1, got {M}")
    N = dataset.num_points

    if scheme.kind in (InitKind.GIVEN, InitKind.FROM_MODEL):
        inducing = scheme.inducing
        if inducing.num_inducing != M:
            raise ValueError(f"{scheme.kind.value} initialization has {inducing.num_inducing} inducing inputs, expected {M}")
        if inducing.Z.shape[1] != dataset.input_dim:
            raise ValueError(f"initial Z has d={inducing.Z.shape[1]} but data has d={dataset.input_dim}")
        hyper = scheme.hyper or default_hyperparameters(dataset)
        if hyper.input_dim != dataset.input_dim:
            raise ValueError(f"initial hyperparameters have {hyper.input_dim} lengthscales, data has d={dataset.input_dim}")
        return inducing, hyper

    hyper = default_hyperparameters(dataset)
    if scheme.kind is InitKind.KMEANS and M <= N:
        k_means = KMeans(n_clusters=M, init="random", n_init=1, max_iter=KMEANS_ITERATIONS,
                         tol=0.0, random_state=int(seed) % (2 ** 32), algorithm="lloyd")
        k_means.fit(dataset.X)
        return InducingSet(k_means.cluster_centers_), hyper

    if scheme.kind is InitKind.KMEANS:
        logger.warning(f"k-means needs M <= N (M={M}, N={N}); using a random subset instead")
    index = make_rng(seed).choice(N, size=M, replace=M > N)
    return InducingSet(dataset.X[index]), hyper


def nested_subsets(dataset: Dataset, ms: Sequence[int], seed: int = 0) -> List[InducingSet]:
    """Z_k = first M_k rows of one seeded permutation of X, so smaller sets nest in larger ones."""
    N = dataset.num_points
    for M in ms:
        if not 1 <= M <= N:
            raise ValueError(f"nested subsets need 1 <= M <= N={N}, got {M}")
    order = make_rng(seed).permutation(N)
    return [InducingSet(dataset.X[order[:M]]) for M in ms]


def _num_hyper(input_dim: int, tie_lengthscales: bool) -> int:
    return 3 if tie_lengthscales else input_dim + 2


def pack_parameters(model: SparseModel, tie_lengthscales: bool = False) -> np.ndarray:
    hyper_vector = model.hyper.to_vector()
    if tie_lengthscales:
        log_ell = hyper_vector[1:-1]
        if not np.allclose(log_ell, log_ell[0], rtol=0.0, atol=1e-12):
            logger.debug("tying unequal lengthscales to their log-mean")
        hyper_vector = np.array([hyper_vector[0], float(np.mean(log_ell)), hyper_vector[-1]])
    if model.inducing is None:
        return hyper_vector
    return np.concatenate([hyper_vector, model.inducing.Z.ravel()])


def unpack_parameters(vector, template: SparseModel, tie_lengthscales: bool = False) -> SparseModel:
    vector = np.asarray(vector, dtype=float)
    d = template.dataset.input_dim
    k = _num_hyper(d, tie_lengthscales)
    if tie_lengthscales:
        hyper = Hyperparameters(vector[0], np.full(d, vector[1]), vector[2])
    else:
        hyper = Hyperparameters.from_vector(vector[:k])
    if template.inducing is None:
        return template.with_params(hyper=hyper)
    Z = vector[k:].reshape(template.inducing.Z.shape)
    return template.with_params(hyper=hyper, inducing=InducingSet(Z))


def _pack_gradient(grad_hyper: np.ndarray, grad_Z: np.ndarray, tie_lengthscales: bool) -> np.ndarray:
    if tie_lengthscales:
        grad_hyper = np.array([grad_hyper[0], float(np.sum(grad_hyper[1:-1])), grad_hyper[-1]])
    return np.concatenate([grad_hyper, grad_Z.ravel()])


class _Objective:
    """Objective/gradient over a free slice of the packed vector, remembering the last evaluation."""

    def __init__(self, template: SparseModel, full_vector: np.ndarray, free: np.ndarray, tie_lengthscales: bool):
        self.template = template
        self.full_vector = full_vector.copy()
        self.free = free
        self.tie_lengthscales = tie_lengthscales
        self.last_x = None
        self.last_breakdown = None
        self.last_gradient = None

    def expand(self, x: np.ndarray) -> np.ndarray:
        vector = self.full_vector.copy()
        vector[self.free] = x
        return vector

    def model_at(self, x: np.ndarray) -> SparseModel:
        return unpack_parameters(self.expand(x), self.template, self.tie_lengthscales)

    def evaluate(self, x: np.ndarray) -> Tuple[NlmlBreakdown, np.ndarray]:
        breakdown, grad_hyper, grad_Z = nlml_grad(self.model_at(x))
        gradient = _pack_gradient(grad_hyper, grad_Z, self.tie_lengthscales)[self.free]
        self.last_x = np.array(x, copy=True)
        self.last_breakdown = breakdown
        self.last_gradient = gradient
        return breakdown, gradient

    def __call__(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        try:
            breakdown, gradient = self.evaluate(x)
        except _NUMERICAL_FAILURES as e:
            logger.debug(f"objective evaluation failed, returning inf: {e}")
            return np.inf, np.zeros_like(x)
        total = breakdown.total
        if not np.isfinite(total) or not np.all(np.isfinite(gradient)):
            return np.inf, np.zeros_like(x)
        return total, gradient

    def record(self, x: np.ndarray, iteration: int, phase: str) -> IterationRecord:
        if self.last_x is None or not np.array_equal(x, self.last_x):
            self.evaluate(x)
        model = self.model_at(x)
        return IterationRecord(
            iteration=iteration,
            phase=phase,
            objective=self.last_breakdown.total,
            breakdown=self.last_breakdown,
            gradient_norm=float(np.linalg.norm(self.last_gradient)),
            hyper=model.hyper,
            inducing=InducingSummary.of(model.inducing),
            parameters=self.expand(x),
        )


def _status_of(result) -> TrainingStatus:
    if result.status == 0:
        return TrainingStatus.CONVERGED
    if result.status == 1:
        return TrainingStatus.MAX_ITER
    return TrainingStatus.LINE_SEARCH_FAILURE


def _run_phase(objective: _Objective, x0: np.ndarray, max_iterations: int, config: OptimizerConfig,
               phase: str, trace: TrainingTrace, start_iteration: int):
    """One L-BFGS-B run; every accepted iterate is appended to the trace."""
    counter = {"iteration": start_iteration}

    def callback(xk):
        counter["iteration"] += 1
        try:
            trace.records.append(objective.record(xk, counter["iteration"], phase))
        except _NUMERICAL_FAILURES as e:
            logger.debug(f"could not record iterate {counter['iteration']}: {e}")

    result = so.minimize(
        objective,
        x0,
        jac=True,
        method="L-BFGS-B",
        callback=callback,
        options={
            "maxiter": max_iterations,
            "maxfun": max(15000, 20 * max_iterations),
            "maxcor": config.memory,
            "ftol": config.objective_tolerance,
            "gtol": config.gradient_tolerance_for(objective.template.dataset.num_points),
        },
    )
    return result, counter["iteration"]


def optimize(model: SparseModel, config: Optional[OptimizerConfig] = None) -> Tuple[SparseModel, TrainingTrace]:
    """
    Train hyperparameters and inducing inputs jointly from `model`.

    For the first `freeze_hyper_iterations` iterations only Z moves; the
    hyperparameter entries are held bit-identical. The best recorded iterate
    is returned; a line-search failure is recorded in the trace, not raised.

    Raises:
        ValueError: if the objective is not finite at the initial parameters
    """
    config = config or OptimizerConfig()
    tie = config.tie_lengthscales
    full_vector = pack_parameters(model, tie)
    template = unpack_parameters(full_vector, model, tie)
    n_hyper = _num_hyper(model.dataset.input_dim, tie)
    everything = np.arange(full_vector.size)

    trace = TrainingTrace(seed=config.seed)
    objective = _Objective(template, full_vector, everything, tie)
    try:
        initial = objective.record(full_vector, 0, "init")
    except _NUMERICAL_FAILURES as e:
        raise ValueError(f"objective is not finite at the initial parameters: {e}") from e
    if not np.isfinite(initial.objective):
        raise ValueError(f"objective is not finite at the initial parameters: {initial.objective}")
    trace.records.append(initial)
    logger.info(f"Training {model.method.value} (N={model.dataset.num_points}, M={model.num_inducing}) "
                f"from objective {initial.objective:.6g}")

    iteration = 0
    remaining = config.max_iterations
    current = full_vector
    freeze = min(config.freeze_hyper_iterations, config.max_iterations)
    if freeze > 0 and model.inducing is not None:
        z_only = everything[n_hyper:]
        frozen_objective = _Objective(template, current, z_only, tie)
        result, iteration = _run_phase(frozen_objective, current[z_only], freeze, config, "frozen",
                                       trace, iteration)
        current = frozen_objective.expand(result.x)
        remaining -= result.nit
        logger.info(f"Frozen-hyperparameter phase finished after {result.nit} iterations: {result.message}")
    elif freeze > 0:
        logger.info("FULL model has no inducing inputs; skipping the frozen-hyperparameter phase")

    result = None
    if remaining > 0:
        objective = _Objective(template, current, everything, tie)
        result, iteration = _run_phase(objective, current, remaining, config, "joint", trace, iteration)
        trace.status = _status_of(result)
        trace.message = str(result.message)
    else:
        trace.status = TrainingStatus.MAX_ITER
        trace.message = "iteration budget used by the frozen phase"

    best_record = trace.best_record
    trained = unpack_parameters(best_record.parameters, template, tie)
    logger.info(f"Training finished ({trace.status.value}) at objective {best_record.objective:.6g} "
                f"after {iteration} iterations")
    return trained, trace


@dataclass
class RestartOutcome:
    seed: int
    model: Optional[SparseModel] = None
    trace: Optional[TrainingTrace] = None
    error: Optional[BaseException] = None

    @property
    def succeeded(self) -> bool:
        return self.error is None

    @property
    def final_objective(self) -> float:
        return self.trace.final_objective if self.trace is not None else float("inf")


@dataclass
class MultistartResult:
    best_model: SparseModel
    best_trace: TrainingTrace
    outcomes: List[RestartOutcome]

    @property
    def traces(self) -> List[TrainingTrace]:
        return [o.trace for o in self.outcomes if o.trace is not None]

    @property
    def best_seed(self) -> int:
        return self.best_trace.seed


def select_best(outcomes: Sequence[RestartOutcome], what: str = "restarts") -> RestartOutcome:
    """Lowest final objective among successful outcomes; ties go to the lowest seed.

    Raises:
        TrainingError: if no outcome succeeded
    """
    succeeded = [o for o in outcomes if o.succeeded]
    if not succeeded:
        raise TrainingError(f"all {len(outcomes)} {what} failed", [o.error for o in outcomes])
    return min(succeeded, key=lambda o: (o.final_objective, o.seed))


def _initial_model(dataset: Dataset, M: int, method: Method, scheme: InitScheme, seed: int,
                   jitter: JitterPolicy) -> SparseModel:
    if not method.is_sparse:
        hyper = scheme.hyper if scheme.hyper is not None else default_hyperparameters(dataset)
        return SparseModel(dataset, hyper, None, method, jitter)
    inducing, hyper = initialize(dataset, M, scheme, seed)
    return SparseModel(dataset, hyper, inducing, method, jitter)


def _run_restart(dataset: Dataset, M: int, method: Method, config: OptimizerConfig, scheme: InitScheme,
                 seed: int, jitter: JitterPolicy) -> RestartOutcome:
    try:
        model = _initial_model(dataset, M, method, scheme, seed, jitter)
        trained, trace = optimize(model, replace(config, seed=seed))
        return RestartOutcome(seed=seed, model=trained, trace=trace)
    except (ValueError,) + _NUMERICAL_FAILURES as e:
        logger.error(f"Restart with seed {seed} failed: {e}")
        return RestartOutcome(seed=seed, error=e)


def optimize_multistart(dataset: Dataset, M: int, method, config: Optional[OptimizerConfig] = None,
                        scheme=None, jobs: int = 1, jitter: Optional[JitterPolicy] = None) -> MultistartResult:
    """
    Run `optimize` from `config.restarts` initializations seeded seed, seed+1, ...

    Restarts may run in parallel; the winner is chosen by (final objective,
    seed) so the result does not depend on completion order.

    Raises:
        TrainingError: if every restart fails
    """
    config = config or OptimizerConfig()
    method = Method.parse(method)
    scheme = InitScheme.random_subset() if scheme is None else InitScheme.parse(scheme)
    jitter = jitter or JitterPolicy()
    seeds = [config.seed + r for r in range(config.restarts)]

    if jobs == 1 or len(seeds) == 1:
        outcomes = [_run_restart(dataset, M, method, config, scheme, s, jitter) for s in seeds]
    else:
        outcomes = Parallel(n_jobs=jobs, backend="threading")(
            delayed(_run_restart)(dataset, M, method, config, scheme, s, jitter) for s in seeds
        )

    best = select_best(outcomes, f"{method.value} restarts")
    logger.info(f"Best of {len(seeds)} restarts for {method.value}: seed {best.seed}, "
                f"objective {best.final_objective:.6g}")
    return MultistartResult(best_model=best.model, best_trace=best.trace, outcomes=list(outcomes))
