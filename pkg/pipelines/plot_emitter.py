#!/usr/bin/env python3
"""
Plot emitter
Writes the plot-data series of a run manifest as CSV files together with one
self-contained plotting script per figure. Rendering the PNGs is optional.
"""

import logging
import os
from dataclasses import dataclass
from string import Template
from typing import Dict, List, Tuple

import pandas as pd

from pipelines.results_writer import FLOAT_FORMAT, RunManifest, series_frame
from sparsegp.utils.plot_generator import render_figure

logger = logging.getLogger(__name__)

PLOTS_DIR = 'plots'


@dataclass(frozen=True)
class FigureSpec:
    """A figure drawn from one key series (or prefix ending in '*') plus optional extras."""

    figure: str
    title: str
    key: str
    extras: Tuple[str, ...] = ()
    required: bool = True


FIT_EXTRAS = ('inducing_*', 'training_data')

FIGURES: Dict[str, Tuple[FigureSpec, ...]] = {
    'fit': (FigureSpec('fits', 'Predictive distributions', 'bands_*', FIT_EXTRAS, required=False),),
    'sweep-add': (
        FigureSpec('addition_sweep', 'Objective change from one added inducing input', 'sweep_*'),
        FigureSpec('fits', 'Trained models', 'bands_*', FIT_EXTRAS, required=False),
    ),
    'clump-study': (FigureSpec('fits', 'Trained models and inducing inputs', 'bands_*', FIT_EXTRAS, required=False),),
    'recover-zx': (FigureSpec('traces', 'Objective during training from Z = X', 'trace_*'),),
    'regime-study': (FigureSpec('regime', 'Behaviour against the number of inducing inputs', 'regime'),),
    'ard-study': (FigureSpec('ard_lengthscales', 'Leading inverse lengthscales', 'ard_lengthscales'),),
}

SCRIPT_HEADER = Template('''#!/usr/bin/env python3
"""
$title
Generated from a $experiment run. Reads the CSV files next to this script
and writes $figure.png.
"""

import os

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import pandas as pd

HERE = os.path.dirname(os.path.abspath(__file__))
SERIES = $series


def load(name):
    return pd.read_csv(os.path.join(HERE, name + '.csv'))


''')

SCRIPT_FOOTER = Template('''
plt.tight_layout()
fig.savefig(os.path.join(HERE, '$figure.png'))
print(os.path.join(HERE, '$figure.png'))
''')

SCRIPT_BODIES = {
    'fits': '''bands = [name for name in SERIES if name.startswith('bands_')]
fig, axes = plt.subplots(len(bands), 1, figsize=(12, 4 * len(bands)), squeeze=False)
for ax, name in zip(axes[:, 0], bands):
    label = name[len('bands_'):]
    df = load(name)
    if 'training_data' in SERIES:
        data = load('training_data')
        ax.scatter(data['x'], data['y'], s=8, color='#333', alpha=0.5, label='data')
    ax.plot(df['x'], df['mean'], linewidth=2, label=label + ' mean')
    ax.fill_between(df['x'], df['lower'], df['upper'], alpha=0.2)
    if 'inducing_' + label in SERIES:
        z = load('inducing_' + label)
        ax.plot(z['x0'], [df['lower'].min()] * len(z), 'x', color='red', markersize=10, label='inducing inputs')
    ax.set_title(label)
    ax.legend()
''',
    'addition_sweep': '''sweeps = [name for name in SERIES if name.startswith('sweep_')]
fig, axes = plt.subplots(len(sweeps), 1, figsize=(12, 4 * len(sweeps)), squeeze=False)
for ax, name in zip(axes[:, 0], sweeps):
    df = load(name)
    for column in ['delta_total', 'delta_data_fit', 'delta_complexity', 'delta_trace']:
        ax.plot(df['x0'], df[column], linewidth=2 if column == 'delta_total' else 1, label=column)
    ax.axhline(0.0, color='#333', linewidth=0.8)
    ax.set_title(name[len('sweep_'):])
    ax.set_xlabel('candidate location')
    ax.legend()
''',
    'traces': '''fig, ax = plt.subplots(figsize=(12, 6))
for name in SERIES:
    df = load(name)
    ax.plot(df['iteration'], df['objective'], linewidth=2, label=name[len('trace_'):])
ax.set_xlabel('iteration')
ax.set_ylabel('NLML')
ax.legend()
''',
    'regime': '''df = load('regime')
fig, axes = plt.subplots(2, 2, figsize=(12, 9))
panels = [('nlml_per_datum', 'NLML / N'), ('noise_std', 'sigma_n'), ('nlpp', 'NLPP'), ('smse', 'SMSE')]
for ax, (column, title) in zip(axes.ravel(), panels):
    for method, group in df.groupby('method'):
        group = group.sort_values('num_inducing')
        ax.plot(group['num_inducing'], group[column], marker='o', label=method)
    ax.set_xscale('log', base=2)
    ax.set_title(title)
    ax.legend()
''',
    'ard_lengthscales': '''df = load('ard_lengthscales')
table = df.pivot(index='rank', columns='row', values='inverse_lengthscale')
fig, ax = plt.subplots(figsize=(12, 6))
table.plot.bar(ax=ax)
ax.set_xlabel('rank')
ax.set_ylabel('1 / lengthscale')
''',
}


def _matching(manifest: RunManifest, pattern: str) -> List[str]:
    if pattern.endswith('*'):
        return sorted(name for name in manifest.series if name.startswith(pattern[:-1]))
    return [pattern] if pattern in manifest.series else []


def resolve_figures(manifest: RunManifest) -> Dict[str, Tuple[FigureSpec, List[str]]]:
    """
    Figures available for a manifest with the series each one draws

    Raises:
        ValueError: empty manifest, unknown experiment, or a required series missing
    """
    if manifest.is_empty():
        raise ValueError(f"{manifest.experiment} manifest has no runs or series; nothing to plot")
    if manifest.experiment not in FIGURES:
        raise ValueError(f"No figures defined for experiment '{manifest.experiment}'. Known: {sorted(FIGURES)}")

    available = sorted(manifest.series)
    figures = {}
    for spec in FIGURES[manifest.experiment]:
        names = _matching(manifest, spec.key)
        if not names:
            if spec.required:
                raise ValueError(f"{manifest.experiment} manifest is missing series '{spec.key}' needed for "
                                 f"figure {spec.figure}; available series: {available}")
            logger.info(f"Skipping optional figure {spec.figure}: no '{spec.key}' series")
            continue
        for pattern in spec.extras:
            names.extend(_matching(manifest, pattern))
        figures[spec.figure] = (spec, names)
    if not figures:
        raise ValueError(f"{manifest.experiment} manifest has no plottable series; available series: {available}")
    return figures


def plot_script(spec: FigureSpec, experiment: str, series: List[str]) -> str:
    """Source of a standalone script drawing one figure from its CSV files"""
    values = {'title': spec.title, 'experiment': experiment, 'figure': spec.figure, 'series': repr(series)}
    return SCRIPT_HEADER.substitute(values) + SCRIPT_BODIES[spec.figure] + SCRIPT_FOOTER.substitute(values)


def emit_plots(manifest: RunManifest, out_dir: str, render: bool = False) -> Dict[str, List[str]]:
    """
    Write plot data and plotting scripts under <out_dir>/plots

    Args:
        manifest: manifest produced by a study run
        out_dir: run directory (or any directory) to write into
        render: also render PNGs with matplotlib

    Returns:
        Dictionary with lists of written series, script and figure paths

    Raises:
        ValueError: the manifest cannot be plotted; nothing is written
    """
    figures = resolve_figures(manifest)
    names = sorted({name for _, series in figures.values() for name in series})
    frames: Dict[str, pd.DataFrame] = {}
    for name in names:
        try:
            frames[name] = series_frame(manifest, name)
        except ValueError as e:
            raise ValueError(f"series '{name}' is malformed: {e}")

    plots_dir = os.path.join(out_dir, PLOTS_DIR)
    os.makedirs(plots_dir, exist_ok=True)
    written = {'series': [], 'scripts': [], 'figures': []}
    for name, frame in frames.items():
        path = os.path.join(plots_dir, f"{name}.csv")
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        written['series'].append(path)

    for figure, (spec, series) in figures.items():
        path = os.path.join(plots_dir, f"{figure}.py")
        with open(path, 'w') as file:
            file.write(plot_script(spec, manifest.experiment, series))
        written['scripts'].append(path)
        if render:
            png = render_figure(figure, {name: frames[name] for name in series},
                                os.path.join(plots_dir, f"{figure}.png"))
            if png:
                written['figures'].append(png)
            else:
                logger.warning(f"⚠️ Figure {figure} could not be rendered")

    logger.info(f"📊 Wrote {len(written['series'])} plot series and {len(written['scripts'])} scripts to {plots_dir}")
    return written
