#!/usr/bin/env python3
"""
Squared-exponential covariance for the sparse GP toolkit.

One code path serves both the ARD and the isotropic kernel; the isotropic
case is simply a lengthscale vector with all entries equal.

    k(x, x') = s_f^2 * exp(-0.5 * sum_d (x_d - x'_d)^2 / l_d^2)
"""

import logging
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cholesky

from sparsegp.errors import NotPositiveDefiniteError

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-10


@dataclass(frozen=True)
class Hyperparameters:
    """Kernel and likelihood hyperparameters, stored in log-space.

    Use `Hyperparameters.create(...)` to build from positive values; the
    properties exponentiate on the way out.
    """

    log_signal_variance: float
    log_lengthscales: np.ndarray = field(repr=False)
    log_noise_variance: float

    def __post_init__(self):
        log_ell = np.atleast_1d(np.asarray(self.log_lengthscales, dtype=float)).copy()
        if log_ell.ndim != 1 or log_ell.size == 0:
            raise ValueError("lengthscales must be a non-empty vector")
        values = np.concatenate([[self.log_signal_variance, self.log_noise_variance], log_ell])
        if not np.all(np.isfinite(values)):
            raise ValueError(f"hyperparameters must be finite and positive, got log-values {values}")
        log_ell.setflags(write=False)
        object.__setattr__(self, "log_signal_variance", float(self.log_signal_variance))
        object.__setattr__(self, "log_noise_variance", float(self.log_noise_variance))
        object.__setattr__(self, "log_lengthscales", log_ell)

    @classmethod
    def create(cls, signal_variance: float, lengthscales, noise_variance: float) -> "Hyperparameters":
        ell = np.atleast_1d(np.asarray(lengthscales, dtype=float))
        if signal_variance <= 0 or noise_variance <= 0 or np.any(ell <= 0):
            raise ValueError(
                f"hyperparameters must be strictly positive: s_f^2={signal_variance}, "
                f"l={ell.tolist()}, sigma_n^2={noise_variance}"
            )
        return cls(np.log(signal_variance), np.log(ell), np.log(noise_variance))

    @property
    def signal_variance(self) -> float:
        return float(np.exp(self.log_signal_variance))

    @property
    def lengthscales(self) -> np.ndarray:
        return np.exp(self.log_lengthscales)

    @property
    def noise_variance(self) -> float:
        return float(np.exp(self.log_noise_variance))

    @property
    def noise_std(self) -> float:
        return float(np.sqrt(self.noise_variance))

    @property
    def input_dim(self) -> int:
        return int(self.log_lengthscales.size)

    def to_vector(self) -> np.ndarray:
        """[log s_f^2, log l_1 .. log l_d, log sigma_n^2]"""
        return np.concatenate([[self.log_signal_variance], self.log_lengthscales, [self.log_noise_variance]])

    @classmethod
    def from_vector(cls, vector) -> "Hyperparameters":
        vector = np.asarray(vector, dtype=float)
        return cls(vector[0], vector[1:-1], vector[-1])

    def to_dict(self) -> dict:
        return {
            "signal_variance": self.signal_variance,
            "lengthscales": self.lengthscales.tolist(),
            "noise_variance": self.noise_variance,
        }

    def __eq__(self, other):
        if not isinstance(other, Hyperparameters):
            return NotImplemented
        return np.array_equal(self.to_vector(), other.to_vector())

    def __hash__(self):
        return hash(self.to_vector().tobytes())


@dataclass(frozen=True)
class JitterPolicy:
    """Diagonal jitter ladder, relative to the mean of the matrix diagonal."""

    initial_jitter: float = 1e-6
    escalation_factor: float = 10.0
    max_jitter: float = 1e-2

    def __post_init__(self):
        if self.initial_jitter <= 0 or self.max_jitter <= 0:
            raise ValueError("jitter levels must be positive")
        if self.initial_jitter > self.max_jitter:
            raise ValueError(f"initial_jitter {self.initial_jitter} exceeds max_jitter {self.max_jitter}")
        if self.escalation_factor <= 1:
            raise ValueError(f"escalation_factor must be > 1, got {self.escalation_factor}")

    def ladder(self) -> List[float]:
        """Relative jitter levels to try, in order, ending exactly at max_jitter."""
        levels = []
        level = self.initial_jitter
        while level < self.max_jitter:
            levels.append(level)
            level *= self.escalation_factor
        levels.append(self.max_jitter)
        return levels


def _as_inputs(A, name: str) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise ValueError(f"{name} must be a matrix of shape (n, d), got shape {A.shape}")
    return A


def _check_dims(A: np.ndarray, B: np.ndarray, hyper: Hyperparameters):
    if A.shape[1] != hyper.input_dim or B.shape[1] != hyper.input_dim:
        raise ValueError(
            f"dimension mismatch: inputs have d={A.shape[1]} and d={B.shape[1]}, "
            f"lengthscales have d={hyper.input_dim}"
        )


def squared_distances(A: np.ndarray, B: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    """Lengthscale-scaled squared distances via |a|^2 + |b|^2 - 2 a.b, floored at 0."""
    As = A / lengthscales
    Bs = B / lengthscales
    sq_a = np.sum(As ** 2, axis=1)
    sq_b = np.sum(Bs ** 2, axis=1)
    d2 = sq_a[:, None] + sq_b[None, :] - 2.0 * As @ Bs.T
    np.maximum(d2, 0.0, out=d2)
    if A is B or (A.shape == B.shape and np.array_equal(A, B)):
        np.fill_diagonal(d2, 0.0)
    return d2


def kernel_matrix(A, B, hyper: Hyperparameters) -> np.ndarray:
    """Cross-covariance matrix K(A, B) of shape (n, m)."""
    A = _as_inputs(A, "A")
    B = A if B is None else _as_inputs(B, "B")
    _check_dims(A, B, hyper)
    return hyper.signal_variance * np.exp(-0.5 * squared_distances(A, B, hyper.lengthscales))


def kernel_eval(x, x2, hyper: Hyperparameters) -> float:
    """Covariance between two single input vectors."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.ndim != 1 or x2.ndim != 1 or x.size != x2.size:
        raise ValueError(f"input vectors must have equal dimension, got {x.shape} and {x2.shape}")
    return float(kernel_matrix(x[None, :], x2[None, :], hyper)[0, 0])


def kernel_diag(A, hyper: Hyperparameters) -> np.ndarray:
    """Diagonal of K(A, A) without forming the matrix."""
    A = _as_inputs(A, "A")
    _check_dims(A, A, hyper)
    return np.full(A.shape[0], hyper.signal_variance)


def lengthscale_gradient_factors(A: np.ndarray, B: np.ndarray, lengthscales: np.ndarray) -> Iterator[np.ndarray]:
    """Yield (a_d - b_d)^2 / l_d^2 (shape (n, m)) for each dimension d.

    K(A, B) times the d-th factor is dK / d log l_d.
    """
    for d in range(A.shape[1]):
        yield (A[:, d, None] - B[None, :, d]) ** 2 / lengthscales[d] ** 2


def input_gradient_weights(A: np.ndarray, B: np.ndarray, lengthscales: np.ndarray) -> Iterator[np.ndarray]:
    """Yield -(a_d - b_d) / l_d^2 for each dimension; K(A, B) times it is dK / da_d."""
    for d in range(A.shape[1]):
        yield -(A[:, d, None] - B[None, :, d]) / lengthscales[d] ** 2


def jittered_cholesky(A, policy: Optional[JitterPolicy] = None) -> Tuple[np.ndarray, float]:
    """
    Lower Cholesky factor of A + jitter * I, escalating jitter until it succeeds.

    Args:
        A: symmetric matrix (m, m)
        policy: jitter ladder, levels relative to mean(diag(A))

    Returns:
        Tuple of (L, applied_jitter) with L @ L.T == A + applied_jitter * I

    Raises:
        NotPositiveDefiniteError: if the factorization fails at max_jitter
    """
    policy = policy or JitterPolicy()
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = np.max(np.abs(A)) if A.size else 0.0
    if scale > 0 and np.max(np.abs(A - A.T)) > SYMMETRY_TOLERANCE * scale:
        raise ValueError("matrix is not symmetric within tolerance")

    mean_diag = float(np.mean(np.diag(A))) if A.size else 1.0
    if not mean_diag > 0:
        mean_diag = 1.0

    attempted = []
    identity = np.eye(A.shape[0])
    for level in policy.ladder():
        jitter = level * mean_diag
        attempted.append(jitter)
        try:
            L = cholesky(A + jitter * identity, lower=True, check_finite=True)
        except (LinAlgError, ValueError):
            continue
        if len(attempted) > 1:
            logger.warning(f"Cholesky needed escalated jitter {jitter:.3g} (tried {len(attempted)} levels)")
        return L, jitter

    raise NotPositiveDefiniteError(
        f"matrix of size {A.shape[0]} is not positive definite even with jitter {attempted[-1]:.3g}",
        jitter_ladder=attempted,
    )
