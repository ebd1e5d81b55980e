#!/usr/bin/env python3
"""
Dataset ingestion, subsetting, standardization and synthetic GP draws.

All randomness comes from generators built by `make_rng(seed)`, a Philox
counter-based bit generator, so every draw is reproducible from its seed.
"""

import hashlib
import io
import logging
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from sparsegp.errors import DataIngestionError
from sparsegp.kernels import Hyperparameters, JitterPolicy, jittered_cholesky, kernel_matrix
from sparsegp.models import Dataset, PredictiveDistribution

logger = logging.getLogger(__name__)

JOINT_DRAW_SOFT_CAP = 4096
_DEFAULT_SEPARATOR = r"[,\s]+"


def make_rng(seed: int) -> np.random.Generator:
    """Seeded Philox generator; the only source of randomness in the toolkit."""
    return np.random.Generator(np.random.Philox(int(seed)))


class SourceKind(str, Enum):
    XY = "xy"
    SNELSON = "snelson"
    TABLE = "table"


class SubsetRule(str, Enum):
    FIRST = "FIRST"
    EVERY_OTHER = "EVERY_OTHER"
    SEEDED_RANDOM = "SEEDED_RANDOM"


class InputDistribution(str, Enum):
    GAUSSIAN = "GAUSSIAN"
    UNIFORM = "UNIFORM"


@dataclass(frozen=True)
class DataSource:
    """
    Where a dataset lives and how to read it.

    kinds:
        xy      - one delimited file, inputs in all but the last column, target last
        snelson - paired inputs/outputs files, whitespace-delimited
        table   - delimited table with explicit input and target columns (0-based)
    """

    kind: SourceKind
    path: Optional[str] = None
    outputs_path: Optional[str] = None
    delimiter: Optional[str] = None
    input_columns: Optional[Tuple[int, ...]] = None
    target_column: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SourceKind(self.kind))
        if self.path is None:
            raise ValueError(f"{self.kind.value} source needs a path")
        if self.kind is SourceKind.SNELSON and self.outputs_path is None:
            raise ValueError("snelson source needs both an inputs and an outputs path")
        if self.kind is SourceKind.TABLE:
            if not self.input_columns or self.target_column is None:
                raise ValueError("table source needs input_columns and target_column")
            object.__setattr__(self, "input_columns", tuple(int(c) for c in self.input_columns))
            if self.target_column in self.input_columns:
                raise ValueError(f"target column {self.target_column} is also listed as an input column")

    @classmethod
    def xy(cls, path: str, delimiter: Optional[str] = None) -> "DataSource":
        return cls(SourceKind.XY, path=path, delimiter=delimiter)

    @classmethod
    def snelson(cls, inputs_path: str, outputs_path: str) -> "DataSource":
        return cls(SourceKind.SNELSON, path=inputs_path, outputs_path=outputs_path)

    @classmethod
    def table(cls, path: str, input_columns: Sequence[int], target_column: int,
              delimiter: Optional[str] = None) -> "DataSource":
        return cls(SourceKind.TABLE, path=path, delimiter=delimiter,
                   input_columns=tuple(input_columns), target_column=target_column)

    def describe(self) -> dict:
        out = {"kind": self.kind.value, "path": self.path}
        if self.outputs_path is not None:
            out["outputs_path"] = self.outputs_path
        if self.kind is SourceKind.TABLE:
            out["input_columns"] = list(self.input_columns)
            out["target_column"] = self.target_column
        return out


def _read_numeric_table(path: str, delimiter: Optional[str] = None) -> np.ndarray:
    """Parse a delimited numeric text file into a (rows, cols) array.

    Blank lines and lines starting with '#' are skipped. Errors carry the
    1-based line number of the offending row.
    """
    if not os.path.isfile(path):
        raise DataIngestionError("file not found", path=path)
    try:
        with open(path, "r", encoding="utf-8") as file:
            raw_lines = file.read().splitlines()
    except UnicodeDecodeError as e:
        raise DataIngestionError(f"cannot decode file: {e}", path=path)
    except OSError as e:
        raise DataIngestionError(f"cannot read file: {e}", path=path)

    lines = pd.Series(raw_lines, index=pd.RangeIndex(1, len(raw_lines) + 1), dtype=object).str.strip()
    lines = lines[(lines != "") & ~lines.str.startswith("#")]
    if lines.empty:
        raise DataIngestionError("file contains no data rows", path=path)

    separator = re.escape(delimiter) if delimiter else _DEFAULT_SEPARATOR
    widths = lines.str.split(separator, regex=True).str.len()
    width = int(widths.iloc[0])
    ragged = widths[widths != width]
    if not ragged.empty:
        raise DataIngestionError(f"expected {width} columns, found {int(ragged.iloc[0])}",
                                 path=path, line=int(ragged.index[0]))

    frame = pd.read_csv(io.StringIO("\n".join(lines)), sep=separator, header=None, engine="python",
                        dtype=str, keep_default_na=False, skip_blank_lines=False)
    values = frame.apply(lambda column: pd.to_numeric(column.str.strip(), errors="coerce")).to_numpy(dtype=float)
    bad_rows = np.flatnonzero(~np.all(np.isfinite(values), axis=1))
    if bad_rows.size:
        row = int(bad_rows[0])
        col = int(np.flatnonzero(~np.isfinite(values[row]))[0])
        raise DataIngestionError(
            f"non-numeric or non-finite value {frame.iat[row, col].strip()!r} in column {col}",
            path=path, line=int(lines.index[row]),
        )
    logger.debug(f"Read {values.shape[0]} rows x {values.shape[1]} columns from {path}")
    return values


def load_xy(source: DataSource) -> Dataset:
    """
    Load a Dataset from a DataSource.

    Raises:
        DataIngestionError: missing file, ragged rows, unparsable or non-finite
            values, mismatched Snelson file lengths, undeclared columns
    """
    if source.kind is SourceKind.SNELSON:
        inputs = _read_numeric_table(source.path)
        outputs = _read_numeric_table(source.outputs_path)
        if outputs.shape[1] != 1:
            raise DataIngestionError(f"outputs file must have one value per line, found {outputs.shape[1]}",
                                     path=source.outputs_path)
        if inputs.shape[0] != outputs.shape[0]:
            raise DataIngestionError(
                f"inputs file has {inputs.shape[0]} rows but outputs file has {outputs.shape[0]}",
                path=source.outputs_path,
            )
        X, y = inputs, outputs[:, 0]
    elif source.kind is SourceKind.XY:
        table = _read_numeric_table(source.path, source.delimiter)
        if table.shape[1] < 2:
            raise DataIngestionError("xy file needs at least two columns (inputs..., target)", path=source.path)
        X, y = table[:, :-1], table[:, -1]
    else:
        table = _read_numeric_table(source.path, source.delimiter)
        width = table.shape[1]
        for column in list(source.input_columns) + [source.target_column]:
            if not 0 <= column < width:
                raise DataIngestionError(f"declared column {column} does not exist (file has {width})",
                                         path=source.path)
        X, y = table[:, list(source.input_columns)], table[:, source.target_column]

    dataset = Dataset(X, y)
    logger.info(f"Loaded {source.kind.value} dataset: N={dataset.num_points}, d={dataset.input_dim}")
    return dataset


def write_xy(dataset: Dataset, path: str) -> str:
    """Echo a dataset as canonical space-delimited text (inputs..., target)."""
    frame = pd.DataFrame(np.column_stack([dataset.X, dataset.y]))
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(path, sep=" ", header=False, index=False, float_format="%.17g")
    return path


def content_hash(dataset: Dataset) -> str:
    """SHA-256 over shape and raw float64 bytes of X and y."""
    digest = hashlib.sha256()
    digest.update(f"{dataset.num_points}x{dataset.input_dim}".encode())
    digest.update(np.ascontiguousarray(dataset.X, dtype=np.float64).tobytes())
    digest.update(np.ascontiguousarray(dataset.y, dtype=np.float64).tobytes())
    return digest.hexdigest()


def subset(dataset: Dataset, n: int, rule=SubsetRule.FIRST, seed: int = 0) -> Dataset:
    """Deterministic n-point subset. SEEDED_RANDOM keeps file order among the chosen rows."""
    rule = SubsetRule(rule)
    N = dataset.num_points
    if not 1 <= n <= N:
        raise ValueError(f"subset size must satisfy 1 <= n <= N={N}, got {n}")
    if rule is SubsetRule.FIRST:
        index = np.arange(n)
    elif rule is SubsetRule.EVERY_OTHER:
        index = np.arange(0, N, 2)
        if n > index.size:
            raise ValueError(f"EVERY_OTHER yields at most {index.size} points from N={N}, asked for {n}")
        index = index[:n]
    else:
        index = np.sort(make_rng(seed).choice(N, size=n, replace=False))
    return Dataset(dataset.X[index], dataset.y[index])


@dataclass(frozen=True)
class SyntheticSpec:
    dim: int
    n_train: int
    n_test: int
    hyper: Hyperparameters
    input_distribution: InputDistribution = InputDistribution.GAUSSIAN
    input_scale: float = 1.0
    seed: int = 0
    jitter: JitterPolicy = field(default_factory=JitterPolicy)

    def __post_init__(self):
        object.__setattr__(self, "input_distribution", InputDistribution(self.input_distribution))
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError(f"n_train and n_test must be >= 1, got {self.n_train} and {self.n_test}")
        if self.hyper.input_dim != self.dim:
            raise ValueError(f"hyperparameters have {self.hyper.input_dim} lengthscales for dim={self.dim}")
        if not self.input_scale > 0:
            raise ValueError(f"input_scale must be positive, got {self.input_scale}")


def sample_gp(spec: SyntheticSpec) -> Tuple[Dataset, Dataset, Hyperparameters]:
    """
    One joint draw from the GP prior over train and test inputs, plus noise.

    Inputs are N(0, input_scale^2 I) for GAUSSIAN or uniform on
    [-input_scale, input_scale]^dim for UNIFORM. The first n_train rows form
    the training set and the rest the test set.
    """
    n = spec.n_train + spec.n_test
    if n > JOINT_DRAW_SOFT_CAP:
        logger.warning(f"joint GP draw over {n} inputs exceeds the soft cap of {JOINT_DRAW_SOFT_CAP}")
    rng = make_rng(spec.seed)
    if spec.input_distribution is InputDistribution.GAUSSIAN:
        X = spec.input_scale * rng.standard_normal((n, spec.dim))
    else:
        X = rng.uniform(-spec.input_scale, spec.input_scale, size=(n, spec.dim))

    L, jitter = jittered_cholesky(kernel_matrix(X, X, spec.hyper), spec.jitter)
    f = L @ rng.standard_normal(n)
    y = f + spec.hyper.noise_std * rng.standard_normal(n)
    logger.info(f"Sampled GP draw: dim={spec.dim}, n_train={spec.n_train}, n_test={spec.n_test}, "
                f"jitter={jitter:.3g}")

    train = Dataset(X[:spec.n_train], y[:spec.n_train])
    test = Dataset(X[spec.n_train:], y[spec.n_train:])
    return train, test, spec.hyper


@dataclass(frozen=True, eq=False)
class TransformRecord:
    """Affine map applied by `standardize`: x' = (x - x_mean) / x_std, y' = (y - y_mean) / y_std."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    def apply(self, dataset: Dataset) -> Dataset:
        return Dataset((dataset.X - self.x_mean) / self.x_std, (dataset.y - self.y_mean) / self.y_std)

    def unstandardize(self, dataset: Dataset) -> Dataset:
        return Dataset(self.unstandardize_inputs(dataset.X), self.unstandardize_targets(dataset.y))

    def unstandardize_inputs(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) * self.x_std + self.x_mean

    def unstandardize_targets(self, y) -> np.ndarray:
        return np.asarray(y, dtype=float) * self.y_std + self.y_mean

    def unstandardize_prediction(self, pred: PredictiveDistribution) -> PredictiveDistribution:
        scale = self.y_std ** 2
        return PredictiveDistribution(
            mean=self.unstandardize_targets(pred.mean),
            latent_variance=pred.latent_variance * scale,
            observation_variance=pred.observation_variance * scale,
        )

    def to_dict(self) -> dict:
        return {
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": float(self.y_mean),
            "y_std": float(self.y_std),
        }


def standardize(dataset: Dataset) -> Tuple[Dataset, TransformRecord]:
    """Zero-mean, unit population variance inputs and targets."""
    x_mean = dataset.X.mean(axis=0)
    x_std = dataset.X.std(axis=0)
    zero_columns: List[int] = np.flatnonzero(x_std == 0).tolist()
    if zero_columns:
        raise ValueError(f"input column {zero_columns[0]} has zero variance")
    y_mean = float(dataset.y.mean())
    y_std = float(dataset.y.std())
    if y_std == 0:
        raise ValueError("target column has zero variance")
    record = TransformRecord(x_mean=x_mean, x_std=x_std, y_mean=y_mean, y_std=y_std)
    return record.apply(dataset), record
