#!/usr/bin/env python3
"""
Dataset and inducing-set quality checks
Runs cheap sanity checks before training and reports problems as messages.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from sparsegp.models import Dataset, InducingSet

logger = logging.getLogger(__name__)

# Ratio of largest to smallest input-column std above which training is poorly scaled
SCALE_DISPARITY_LIMIT = 1e4


def validate_dataset(dataset: Dataset, name: str = "dataset") -> Tuple[bool, List[str]]:
    """
    Check a dataset for conditions that make GP training ill-posed.

    Args:
        dataset: dataset to check
        name: label used in messages

    Returns:
        Tuple of (is_valid, list_of_issues); duplicates and scaling are
        reported but do not make the dataset invalid
    """
    issues = []
    is_valid = True

    if dataset.num_points < 2:
        issues.append(f"{name} has only {dataset.num_points} point(s)")
        is_valid = False

    if np.var(dataset.y) == 0:
        issues.append(f"{name} has constant targets")
        is_valid = False

    unique_rows = np.unique(dataset.X, axis=0).shape[0]
    if unique_rows < dataset.num_points:
        issues.append(f"{name} has {dataset.num_points - unique_rows} duplicate input row(s)")

    stds = dataset.X.std(axis=0)
    constant = np.flatnonzero(stds == 0)
    if constant.size:
        issues.append(f"{name} input column(s) {constant.tolist()} are constant")
    positive = stds[stds > 0]
    if positive.size and positive.max() / positive.min() > SCALE_DISPARITY_LIMIT:
        issues.append(f"{name} input scales differ by more than {SCALE_DISPARITY_LIMIT:g}x; consider standardizing")

    return is_valid, issues


def validate_inducing(inducing: InducingSet, dataset: Dataset,
                      num_points_limit: Optional[int] = None) -> Tuple[bool, List[str]]:
    """Check an inducing set against the data it will summarize."""
    issues = []
    is_valid = True
    if inducing.Z.shape[1] != dataset.input_dim:
        issues.append(f"inducing inputs have d={inducing.Z.shape[1]}, data has d={dataset.input_dim}")
        return False, issues

    limit = num_points_limit if num_points_limit is not None else dataset.num_points
    if inducing.num_inducing > limit:
        issues.append(f"M={inducing.num_inducing} exceeds N={limit}; the sparse model is no cheaper than the full one")

    unique_rows = np.unique(inducing.Z, axis=0).shape[0]
    if unique_rows < inducing.num_inducing:
        issues.append(f"{inducing.num_inducing - unique_rows} duplicate inducing input(s); relying on jitter")

    lo, hi = dataset.X.min(axis=0), dataset.X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    outside = np.any((inducing.Z < lo - span) | (inducing.Z > hi + span), axis=1)
    if np.any(outside):
        issues.append(f"{int(outside.sum())} inducing input(s) lie far outside the data range")

    return is_valid, issues


def log_issues(issues: List[str], context: str):
    for issue in issues:
        logger.warning(f"⚠️ {context}: {issue}")
