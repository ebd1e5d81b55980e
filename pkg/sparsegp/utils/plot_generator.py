#!/usr/bin/env python3
"""
Plot Generator Utilities for the sparse GP toolkit
Renders experiment figures from plot-data frames using matplotlib
"""

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import seaborn as sns
import pandas as pd
import logging
from typing import Callable, Dict, List

logger = logging.getLogger(__name__)
plt.style.use('seaborn-v0_8-darkgrid')
sns.set_palette("husl")

DELTA_COLUMNS = ['delta_total', 'delta_data_fit', 'delta_complexity', 'delta_trace']
REGIME_PANELS = [
    ('nlml_per_datum', 'NLML / N'),
    ('noise_std', 'sigma_n'),
    ('nlpp', 'NLPP'),
    ('smse', 'SMSE'),
]


def _with_prefix(frames: Dict[str, pd.DataFrame], prefix: str) -> List[str]:
    return sorted(name for name in frames if name.startswith(prefix))


def _render_fits(frames: Dict[str, pd.DataFrame], path: str) -> str:
    """Predictive mean and 2-sigma bands per method, training data and inducing inputs"""
    bands = _with_prefix(frames, 'bands_')
    fig, axes = plt.subplots(len(bands), 1, figsize=(12, 4 * len(bands)), squeeze=False)
    for ax, name in zip(axes[:, 0], bands):
        label = name[len('bands_'):]
        df = frames[name]
        if 'training_data' in frames:
            data = frames['training_data']
            ax.scatter(data['x'], data['y'], s=8, color='#333', alpha=0.5, label='data')
        ax.plot(df['x'], df['mean'], linewidth=2, color='#FF6B6B', label=f'{label} mean')
        ax.fill_between(df['x'], df['lower'], df['upper'], alpha=0.2, color='#FF6B6B')
        inducing = frames.get(f'inducing_{label}')
        if inducing is not None and 'x0' in inducing:
            ax.plot(inducing['x0'], [df['lower'].min()] * len(inducing), 'x', color='red', markersize=10,
                    label='inducing inputs')
        ax.set_title(label, fontsize=14, fontweight='bold')
        ax.legend()
    plt.tight_layout()
    fig.savefig(path)
    return path


def _render_sweep(frames: Dict[str, pd.DataFrame], path: str) -> str:
    """Objective change per term from adding one inducing input along the grid"""
    sweeps = _with_prefix(frames, 'sweep_')
    fig, axes = plt.subplots(len(sweeps), 1, figsize=(12, 4 * len(sweeps)), squeeze=False)
    for ax, name in zip(axes[:, 0], sweeps):
        df = frames[name]
        for column in DELTA_COLUMNS:
            ax.plot(df['x0'], df[column], linewidth=2 if column == 'delta_total' else 1, label=column)
        ax.axhline(0.0, color='#333', linewidth=0.8)
        ax.set_title(f"Addition sweep - {name[len('sweep_'):]}", fontsize=14, fontweight='bold')
        ax.set_xlabel('candidate location', fontsize=12)
        ax.legend()
    plt.tight_layout()
    fig.savefig(path)
    return path


def _render_regime(frames: Dict[str, pd.DataFrame], path: str) -> str:
    """Four panels against the number of inducing inputs"""
    df = frames['regime']
    fig, axes = plt.subplots(2, 2, figsize=(12, 9))
    for ax, (column, title) in zip(axes.ravel(), REGIME_PANELS):
        sns.lineplot(data=df, x='num_inducing', y=column, hue='method', marker='o', ax=ax)
        ax.set_xscale('log', base=2)
        ax.set_title(title, fontsize=12, fontweight='bold')
    plt.tight_layout()
    fig.savefig(path)
    return path


def _render_traces(frames: Dict[str, pd.DataFrame], path: str) -> str:
    """Objective against iteration for each training trace"""
    traces = _with_prefix(frames, 'trace_')
    fig, ax = plt.subplots(figsize=(12, 6))
    for name in traces:
        df = frames[name]
        ax.plot(df['iteration'], df['objective'], linewidth=2, label=name[len('trace_'):])
    ax.set_xlabel('iteration', fontsize=12, fontweight='bold')
    ax.set_ylabel('NLML', fontsize=12, fontweight='bold')
    ax.legend()
    plt.tight_layout()
    fig.savefig(path)
    return path


def _render_ard(frames: Dict[str, pd.DataFrame], path: str) -> str:
    """Leading inverse lengthscales per training protocol"""
    df = frames['ard_lengthscales']
    fig, ax = plt.subplots(figsize=(12, 6))
    sns.barplot(data=df, x='rank', y='inverse_lengthscale', hue='row', ax=ax)
    ax.set_xlabel('rank', fontsize=12, fontweight='bold')
    ax.set_ylabel('1 / lengthscale', fontsize=12, fontweight='bold')
    plt.tight_layout()
    fig.savefig(path)
    return path


RENDERERS: Dict[str, Callable[[Dict[str, pd.DataFrame], str], str]] = {
    'fits': _render_fits,
    'addition_sweep': _render_sweep,
    'regime': _render_regime,
    'traces': _render_traces,
    'ard_lengthscales': _render_ard,
}


def render_figure(figure: str, frames: Dict[str, pd.DataFrame], path: str) -> str:
    """
    Render one named figure to a PNG file

    Args:
        figure: key of RENDERERS
        frames: plot-data frames by series name
        path: output PNG path

    Returns:
        The written path, or "" if rendering failed
    """
    if figure not in RENDERERS:
        raise ValueError(f"Unknown figure '{figure}'. Known: {sorted(RENDERERS)}")
    try:
        return RENDERERS[figure](frames, path)
    except Exception as e:
        logger.error(f"Error rendering figure {figure}: {e}")
        return ""
    finally:
        plt.close('all')
