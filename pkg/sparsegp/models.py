#!/usr/bin/env python3
"""
Exact and sparse GP regression objectives.

All four methods share one negative log marginal likelihood

    F = N/2 log(2 pi) + 1/2 log|Q_ff + G| + 1/2 y^T (Q_ff + G)^{-1} y + tr(T) / (2 sigma_n^2)

with Q_ff = K_fu K_uu^{-1} K_uf and

    FITC: G = diag[K_ff - Q_ff] + sigma_n^2 I,  T = 0
    VFE:  G = sigma_n^2 I,                       T = K_ff - Q_ff
    DTC:  G = sigma_n^2 I,                       T = 0
    FULL: Q_ff + G replaced by K_ff + sigma_n^2 I

Sparse methods only ever factorize M x M matrices: K_uu + eps I = L_u L_u^T and
B = I + V G^{-1} V^T with V = L_u^{-1} K_uf, so that the inner matrix
Sigma = K_uu + K_uf G^{-1} K_fu = L_u B L_u^T has Cholesky factor L_u L_B.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

from sparsegp.errors import InternalConsistencyError, NotPositiveDefiniteError
from sparsegp.kernels import (
    Hyperparameters,
    JitterPolicy,
    input_gradient_weights,
    jittered_cholesky,
    kernel_diag,
    kernel_matrix,
    lengthscale_gradient_factors,
)

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
RESIDUAL_TOLERANCE = 1e-8
FULL_GP_SOFT_CAP = 5000


class Method(str, Enum):
    FULL = "FULL"
    FITC = "FITC"
    VFE = "VFE"
    DTC = "DTC"

    @property
    def is_sparse(self) -> bool:
        return self is not Method.FULL

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, Method):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown method {value!r}; expected one of {[m.value for m in cls]}")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Training inputs X (N x d) and targets y (N)."""

    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[1] < 1:
            raise ValueError(f"X must have shape (N, d) with d >= 1, got {X.shape}")
        if X.shape[0] < 1:
            raise ValueError("dataset must contain at least one point")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite values")
        X = X.copy()
        y = y.copy()
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def num_points(self) -> int:
        return self.X.shape[0]

    @property
    def input_dim(self) -> int:
        return self.X.shape[1]

    def __len__(self):
        return self.num_points


@dataclass(frozen=True, eq=False)
class InducingSet:
    """Inducing input locations Z (M x d)."""

    Z: np.ndarray = field(repr=False)

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if Z.ndim != 2 or Z.shape[0] < 1 or Z.shape[1] < 1:
            raise ValueError(f"Z must have shape (M, d) with M, d >= 1, got {Z.shape}")
        if not np.all(np.isfinite(Z)):
            raise ValueError("inducing inputs contain non-finite values")
        Z = Z.copy()
        Z.setflags(write=False)
        object.__setattr__(self, "Z", Z)

    @property
    def num_inducing(self) -> int:
        return self.Z.shape[0]

    def append(self, z) -> "InducingSet":
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return InducingSet(np.vstack([self.Z, z]))

    def __len__(self):
        return self.num_inducing


@dataclass(frozen=True)
class NlmlBreakdown:
    """Components of the objective; total is their exact sum."""

    constant: float
    data_fit: float
    complexity_penalty: float
    trace_term: float = 0.0

    @property
    def total(self) -> float:
        return self.constant + self.data_fit + self.complexity_penalty + self.trace_term

    def __sub__(self, other: "NlmlBreakdown") -> "NlmlBreakdown":
        return NlmlBreakdown(
            self.constant - other.constant,
            self.data_fit - other.data_fit,
            self.complexity_penalty - other.complexity_penalty,
            self.trace_term - other.trace_term,
        )

    def to_dict(self) -> dict:
        return {
            "constant": float(self.constant),
            "data_fit": float(self.data_fit),
            "complexity_penalty": float(self.complexity_penalty),
            "trace_term": float(self.trace_term),
            "total": float(self.total),
        }


@dataclass(frozen=True, eq=False)
class PredictiveDistribution:
    mean: np.ndarray
    latent_variance: np.ndarray
    observation_variance: np.ndarray

    def __len__(self):
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class _SparseFactorization:
    """Cached M x M factorizations and per-point quantities of a sparse model."""

    L_uu: np.ndarray
    applied_jitter: float
    K_uf: np.ndarray
    V: np.ndarray
    residual: np.ndarray
    g: np.ndarray
    L_B: np.ndarray
    c: np.ndarray

    @property
    def L_sigma(self) -> np.ndarray:
        """Cholesky factor of Sigma = K_uu + K_uf G^{-1} K_fu."""
        return self.L_uu @ self.L_B


@dataclass(frozen=True, eq=False)
class _FullFactorization:
    L: np.ndarray
    alpha: np.ndarray


@dataclass(frozen=True, eq=False)
class SparseModel:
    """Immutable snapshot of (data, hyperparameters, inducing set, method).

    Factorizations are computed lazily and cached on the snapshot; changing a
    parameter means building a new snapshot with `with_params`.
    """

    dataset: Dataset
    hyper: Hyperparameters
    inducing: Optional[InducingSet] = None
    method: Method = Method.VFE
    jitter: JitterPolicy = field(default_factory=JitterPolicy)

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        if self.hyper.input_dim != self.dataset.input_dim:
            raise ValueError(
                f"hyperparameters have {self.hyper.input_dim} lengthscales but data has d={self.dataset.input_dim}"
            )
        if self.method.is_sparse:
            if self.inducing is None:
                raise ValueError(f"method {self.method.value} needs an inducing set")
            if self.inducing.Z.shape[1] != self.dataset.input_dim:
                raise ValueError(
                    f"inducing inputs have d={self.inducing.Z.shape[1]} but data has d={self.dataset.input_dim}"
                )

    @property
    def num_inducing(self) -> int:
        return 0 if self.inducing is None else self.inducing.num_inducing

    def with_params(self, hyper: Optional[Hyperparameters] = None, inducing: Optional[InducingSet] = None) -> "SparseModel":
        return replace(
            self,
            hyper=self.hyper if hyper is None else hyper,
            inducing=self.inducing if inducing is None else inducing,
        )

    def with_method(self, method) -> "SparseModel":
        return replace(self, method=Method.parse(method))

    @cached_property
    def factorization(self):
        if self.method.is_sparse:
            return _factorize_sparse(self)
        return _factorize_full(self.dataset, self.hyper)

    @property
    def applied_jitter(self) -> float:
        if not self.method.is_sparse:
            return 0.0
        return self.factorization.applied_jitter


def _cholesky(A: np.ndarray, what: str) -> np.ndarray:
    try:
        return cholesky(A, lower=True)
    except LinAlgError as e:
        raise NotPositiveDefiniteError(f"Cholesky of {what} failed: {e}") from e


def _floor_residual(residual: np.ndarray, signal_variance: float) -> np.ndarray:
    worst = float(np.min(residual)) if residual.size else 0.0
    if worst < -RESIDUAL_TOLERANCE * signal_variance:
        raise InternalConsistencyError(
            f"diag[K_ff - Q_ff] has entry {worst:.3g}, below -{RESIDUAL_TOLERANCE:g} * s_f^2"
        )
    return np.maximum(residual, 0.0)


def _factorize_full(dataset: Dataset, hyper: Hyperparameters) -> _FullFactorization:
    if dataset.num_points > FULL_GP_SOFT_CAP:
        logger.warning(f"full GP on N={dataset.num_points} exceeds the soft cap of {FULL_GP_SOFT_CAP}")
    K = kernel_matrix(dataset.X, dataset.X, hyper)
    K[np.diag_indices_from(K)] += hyper.noise_variance
    L = _cholesky(K, "K_ff + sigma_n^2 I")
    alpha = cho_solve((L, True), dataset.y)
    return _FullFactorization(L=L, alpha=alpha)


def _factorize_sparse(model: SparseModel) -> _SparseFactorization:
    X, y = model.dataset.X, model.dataset.y
    Z = model.inducing.Z
    hyper = model.hyper

    L_uu, jitter = jittered_cholesky(kernel_matrix(Z, Z, hyper), model.jitter)
    K_uf = kernel_matrix(Z, X, hyper)
    V = solve_triangular(L_uu, K_uf, lower=True)
    residual = _floor_residual(kernel_diag(X, hyper) - np.sum(V ** 2, axis=0), hyper.signal_variance)

    if model.method is Method.FITC:
        g = residual + hyper.noise_variance
    else:
        g = np.full(X.shape[0], hyper.noise_variance)

    B = np.eye(Z.shape[0]) + (V / g) @ V.T
    L_B = _cholesky(B, "I + V G^-1 V^T")
    c = solve_triangular(L_B, V @ (y / g), lower=True)
    return _SparseFactorization(L_uu=L_uu, applied_jitter=jitter, K_uf=K_uf, V=V,
                                residual=residual, g=g, L_B=L_B, c=c)


def full_nlml(dataset: Dataset, hyper: Hyperparameters) -> NlmlBreakdown:
    """NLML of the exact GP via the Cholesky factor of K_ff + sigma_n^2 I."""
    fact = _factorize_full(dataset, hyper)
    return _full_breakdown(dataset, fact)


def _full_breakdown(dataset: Dataset, fact: _FullFactorization) -> NlmlBreakdown:
    return NlmlBreakdown(
        constant=0.5 * dataset.num_points * LOG_2PI,
        data_fit=0.5 * float(dataset.y @ fact.alpha),
        complexity_penalty=float(np.sum(np.log(np.diag(fact.L)))),
        trace_term=0.0,
    )


def full_nlml_grad(dataset: Dataset, hyper: Hyperparameters) -> Tuple[NlmlBreakdown, np.ndarray]:
    """Full-GP NLML and its gradient w.r.t. [log s_f^2, log l_1..d, log sigma_n^2]."""
    fact = _factorize_full(dataset, hyper)
    breakdown = _full_breakdown(dataset, fact)

    X = dataset.X
    K = kernel_matrix(X, X, hyper)
    P = cho_solve((fact.L, True), np.eye(dataset.num_points)) - np.outer(fact.alpha, fact.alpha)

    PK = P * K
    grad = np.empty(hyper.input_dim + 2)
    grad[0] = 0.5 * np.sum(PK)
    for d, factor in enumerate(lengthscale_gradient_factors(X, X, hyper.lengthscales)):
        grad[1 + d] = 0.5 * np.sum(PK * factor)
    grad[-1] = 0.5 * hyper.noise_variance * np.trace(P)
    return breakdown, grad


def sparse_nlml(model: SparseModel) -> NlmlBreakdown:
    """Unified sparse NLML for FITC, VFE and DTC without any N x N matrix."""
    if not model.method.is_sparse:
        raise ValueError("sparse_nlml needs a FITC, VFE or DTC model; use full_nlml for FULL")
    fact = model.factorization
    return _sparse_breakdown(model, fact)


def _sparse_breakdown(model: SparseModel, fact: _SparseFactorization) -> NlmlBreakdown:
    y = model.dataset.y
    n = model.dataset.num_points
    data_fit = 0.5 * (float(np.sum(y ** 2 / fact.g)) - float(fact.c @ fact.c))
    complexity = float(np.sum(np.log(np.diag(fact.L_B)))) + 0.5 * float(np.sum(np.log(fact.g)))
    trace = 0.0
    if model.method is Method.VFE:
        trace = 0.5 * float(np.sum(fact.residual)) / model.hyper.noise_variance
    return NlmlBreakdown(constant=0.5 * n * LOG_2PI, data_fit=data_fit,
                         complexity_penalty=complexity, trace_term=trace)


def sparse_nlml_grad(model: SparseModel) -> Tuple[NlmlBreakdown, np.ndarray, np.ndarray]:
    """
    Sparse NLML with analytic gradients.

    Returns:
        Tuple of (breakdown, grad_log_hyper, grad_Z) where grad_log_hyper is
        ordered [log s_f^2, log l_1..d, log sigma_n^2] and grad_Z has shape (M, d)
    """
    if not model.method.is_sparse:
        breakdown, grad = full_nlml_grad(model.dataset, model.hyper)
        return breakdown, grad, np.zeros((0, model.dataset.input_dim))

    fact = model.factorization
    breakdown = _sparse_breakdown(model, fact)
    hyper = model.hyper
    X, y = model.dataset.X, model.dataset.y
    Z = model.inducing.Z
    M = Z.shape[0]
    sn2 = hyper.noise_variance
    L_uu, L_B, V, g = fact.L_uu, fact.L_B, fact.V, fact.g

    # alpha = (Q + G)^{-1} y and diag((Q + G)^{-1}) via the inversion lemma
    b = solve_triangular(L_B, fact.c, lower=True, trans="T")
    alpha = (y - V.T @ b) / g
    LB_inv_V = solve_triangular(L_B, V, lower=True)
    A_inv_diag = 1.0 / g - np.sum(LB_inv_V ** 2, axis=0) / g ** 2
    p = A_inv_diag - alpha ** 2

    # weight on diag(Q_ff) entering through G (FITC) or the trace term (VFE)
    if model.method is Method.FITC:
        beta = 0.5 * p
    elif model.method is Method.VFE:
        beta = np.full(X.shape[0], 0.5 / sn2)
    else:
        beta = np.zeros(X.shape[0])

    B_inv_V_G_inv = solve_triangular(L_B, LB_inv_V, lower=True, trans="T") / g
    V_alpha = V @ alpha
    dF_dKuf = solve_triangular(
        L_uu, B_inv_V_G_inv - np.outer(V_alpha, alpha) - 2.0 * V * beta, lower=True, trans="T"
    )

    U = solve_triangular(L_uu, V, lower=True, trans="T")
    U_alpha = U @ alpha
    L_uu_inv = solve_triangular(L_uu, np.eye(M), lower=True)
    B_inv = cho_solve((L_B, True), np.eye(M))
    Kuu_inv_minus_Sigma_inv = L_uu_inv.T @ (np.eye(M) - B_inv) @ L_uu_inv
    dF_dKuu = -0.5 * (Kuu_inv_minus_Sigma_inv - np.outer(U_alpha, U_alpha)) + (U * beta) @ U.T
    dF_dKuu = 0.5 * (dF_dKuu + dF_dKuu.T)

    dF_dsn2 = 0.5 * float(np.sum(p))
    if model.method is Method.VFE:
        dF_dsn2 -= breakdown.trace_term / sn2

    K_uf = fact.K_uf
    K_uu = kernel_matrix(Z, Z, hyper)
    ell = hyper.lengthscales

    S_uf = dF_dKuf * K_uf
    S_uu = dF_dKuu * K_uu

    grad_hyper = np.empty(hyper.input_dim + 2)
    # jitter is proportional to s_f^2, so dK_uu/dlog s_f^2 includes it
    K_uu_jittered = K_uu + fact.applied_jitter * np.eye(M)
    grad_hyper[0] = (np.sum(S_uf) + np.sum(dF_dKuu * K_uu_jittered)
                     + float(np.sum(beta)) * hyper.signal_variance)
    factors = zip(lengthscale_gradient_factors(Z, X, ell), lengthscale_gradient_factors(Z, Z, ell))
    for d, (factor_uf, factor_uu) in enumerate(factors):
        grad_hyper[1 + d] = np.sum(S_uf * factor_uf) + np.sum(S_uu * factor_uu)
    grad_hyper[-1] = dF_dsn2 * sn2

    grad_Z = np.empty_like(Z)
    weights = zip(input_gradient_weights(Z, X, ell), input_gradient_weights(Z, Z, ell))
    for d, (weight_uf, weight_uu) in enumerate(weights):
        # each K_uu entry depends on two rows of Z; S_uu is symmetric
        grad_Z[:, d] = np.sum(S_uf * weight_uf, axis=1) + 2.0 * np.sum(S_uu * weight_uu, axis=1)
    return breakdown, grad_hyper, grad_Z


def nlml(model: SparseModel) -> NlmlBreakdown:
    """Objective of any model, dispatching on its method tag."""
    if model.method.is_sparse:
        return sparse_nlml(model)
    return _full_breakdown(model.dataset, model.factorization)


def nlml_grad(model: SparseModel) -> Tuple[NlmlBreakdown, np.ndarray, np.ndarray]:
    return sparse_nlml_grad(model)


def predict(model: SparseModel, Xstar) -> PredictiveDistribution:
    """Predictive mean, latent variance and observation variance at Xstar."""
    Xstar = np.asarray(Xstar, dtype=float)
    if Xstar.ndim == 1:
        Xstar = Xstar[:, None]
    hyper = model.hyper
    if Xstar.shape[1] != hyper.input_dim:
        raise ValueError(f"test inputs have d={Xstar.shape[1]} but model has d={hyper.input_dim}")
    k_ss = kernel_diag(Xstar, hyper)

    if model.method.is_sparse:
        fact = model.factorization
        K_us = kernel_matrix(model.inducing.Z, Xstar, hyper)
        W = solve_triangular(fact.L_uu, K_us, lower=True)
        LB_inv_W = solve_triangular(fact.L_B, W, lower=True)
        mean = LB_inv_W.T @ fact.c
        latent = k_ss - np.sum(W ** 2, axis=0) + np.sum(LB_inv_W ** 2, axis=0)
    else:
        fact = model.factorization
        K_fs = kernel_matrix(model.dataset.X, Xstar, hyper)
        mean = K_fs.T @ fact.alpha
        v = solve_triangular(fact.L, K_fs, lower=True)
        latent = k_ss - np.sum(v ** 2, axis=0)

    latent = np.maximum(latent, 0.0)
    return PredictiveDistribution(mean=mean, latent_variance=latent,
                                  observation_variance=latent + hyper.noise_variance)


def heteroscedastic_diag(points, inducing: InducingSet, hyper: Hyperparameters,
                         jitter: Optional[JitterPolicy] = None) -> np.ndarray:
    """FITC's input-dependent noise diag[K_ff - Q_ff] at `points`, floored at 0.

    `points` may be a Dataset or an input matrix (e.g. a plotting grid).
    """
    X = points.X if isinstance(points, Dataset) else np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    L_uu, _ = jittered_cholesky(kernel_matrix(inducing.Z, inducing.Z, hyper), jitter or JitterPolicy())
    W = solve_triangular(L_uu, kernel_matrix(inducing.Z, X, hyper), lower=True)
    return _floor_residual(kernel_diag(X, hyper) - np.sum(W ** 2, axis=0), hyper.signal_variance)
