#!/usr/bin/env python3
"""
Result Formatter Utilities for the sparse GP toolkit
Turns models, traces and reports into plain Python structures for YAML/CSV output.
"""

import logging
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from sparsegp.models import NlmlBreakdown, SparseModel, nlml
from sparsegp.training import TrainingTrace

logger = logging.getLogger(__name__)


def to_builtin(value: Any) -> Any:
    """Recursively convert numpy scalars/arrays and tuples into YAML-safe builtins"""
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_builtin(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


def format_breakdown(breakdown: Optional[NlmlBreakdown]) -> Optional[Dict[str, float]]:
    if breakdown is None:
        return None
    return breakdown.to_dict()


def format_model(model: SparseModel, include_objective: bool = True) -> Dict[str, Any]:
    """
    Summary of a trained model

    Args:
        model: trained model snapshot
        include_objective: also evaluate and include the NLML breakdown

    Returns:
        Dictionary with method, hyperparameters, inducing inputs and breakdown
    """
    summary = {
        'method': model.method.value,
        'num_inducing': model.num_inducing,
        'hyperparameters': to_builtin(model.hyper.to_dict()),
        'noise_std': model.hyper.noise_std,
        'inducing_inputs': to_builtin(model.inducing.Z) if model.inducing is not None else None,
    }
    if include_objective:
        summary['breakdown'] = format_breakdown(nlml(model))
    return summary


def format_trace(trace: TrainingTrace) -> Dict[str, Any]:
    return {
        'status': trace.status.value,
        'message': trace.message,
        'seed': trace.seed,
        'iterations': len(trace.records) - 1,
        'initial_objective': float(trace.initial_objective),
        'final_objective': float(trace.final_objective),
    }


def series_from_frame(frame: pd.DataFrame) -> Dict[str, List[Any]]:
    """Column-oriented series for the manifest"""
    return {str(column): to_builtin(frame[column].tolist()) for column in frame.columns}


def frame_from_series(series: Dict[str, List[Any]]) -> pd.DataFrame:
    if not series:
        raise ValueError("series has no columns")
    lengths = {len(v) for v in series.values()}
    if len(lengths) != 1:
        raise ValueError(f"series columns have different lengths: {sorted(lengths)}")
    return pd.DataFrame(series)
