#!/usr/bin/env python3
"""
Run manifests and result files
One directory per run: manifest.yaml, one YAML file per sub-run and a CSV per series.
"""

import logging
import os
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List

import pandas as pd
import yaml

from sparsegp.utils.result_formatter import frame_from_series, to_builtin

logger = logging.getLogger(__name__)

MANIFEST_FILE = 'manifest.yaml'
RUNS_DIR = 'runs'
SERIES_DIR = 'series'
FLOAT_FORMAT = '%.17g'

STATUS_OK = 'ok'
STATUS_FAILED = 'failed'


@dataclass
class RunManifest:
    """Everything needed to reproduce and inspect one experiment run."""

    experiment: str
    config: Dict[str, Any]
    dataset: Dict[str, Any]
    toolkit_version: str
    runs: List[Dict[str, Any]] = field(default_factory=list)
    series: Dict[str, Dict[str, List[Any]]] = field(default_factory=dict)
    reports: Dict[str, Any] = field(default_factory=dict)
    wall_clock: Dict[str, Any] = field(default_factory=dict)

    @property
    def failed_runs(self) -> List[Dict[str, Any]]:
        return [r for r in self.runs if r.get('status') == STATUS_FAILED]

    @property
    def status(self) -> str:
        return 'partial' if self.failed_runs else 'complete'

    def is_empty(self) -> bool:
        return not self.runs and not self.series

    def run(self, name: str) -> Dict[str, Any]:
        for record in self.runs:
            if record.get('name') == name:
                return record
        raise KeyError(f"no run named {name!r}; runs: {[r.get('name') for r in self.runs]}")

    def to_dict(self) -> Dict[str, Any]:
        return to_builtin({
            'experiment': self.experiment,
            'status': self.status,
            'toolkit_version': self.toolkit_version,
            'config': self.config,
            'dataset': self.dataset,
            'runs': self.runs,
            'reports': self.reports,
            'series': self.series,
            'wall_clock': self.wall_clock,
        })

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunManifest':
        try:
            return cls(
                experiment=data['experiment'],
                config=data.get('config') or {},
                dataset=data.get('dataset') or {},
                toolkit_version=data.get('toolkit_version', 'unknown'),
                runs=data.get('runs') or [],
                series=data.get('series') or {},
                reports=data.get('reports') or {},
                wall_clock=data.get('wall_clock') or {},
            )
        except KeyError as e:
            raise ValueError(f"manifest is missing required field {e}")


def run_directory(output_root: str, experiment: str, seed: int) -> str:
    return os.path.join(output_root, f"{experiment}-seed{seed}")


def _safe_name(name: str) -> str:
    return re.sub(r'[^A-Za-z0-9_.-]+', '_', name).strip('_') or 'run'


def write_manifest(manifest: RunManifest, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, MANIFEST_FILE)
    with open(path, 'w') as file:
        yaml.safe_dump(manifest.to_dict(), file, sort_keys=False, default_flow_style=None)
    logger.info(f"✅ Wrote manifest to {path}")
    return path


def write_run_files(manifest: RunManifest, out_dir: str) -> List[str]:
    """One YAML file per sub-run."""
    runs_dir = os.path.join(out_dir, RUNS_DIR)
    os.makedirs(runs_dir, exist_ok=True)
    paths = []
    for record in manifest.runs:
        path = os.path.join(runs_dir, f"{_safe_name(str(record.get('name', 'run')))}.yaml")
        with open(path, 'w') as file:
            yaml.safe_dump(to_builtin(record), file, sort_keys=False, default_flow_style=None)
        paths.append(path)
    return paths


def write_series_csv(name: str, series: Dict[str, List[Any]], directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"{_safe_name(name)}.csv")
    frame_from_series(series).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def write_series_files(manifest: RunManifest, out_dir: str) -> List[str]:
    directory = os.path.join(out_dir, SERIES_DIR)
    return [write_series_csv(name, series, directory) for name, series in manifest.series.items()]


def write_results(manifest: RunManifest, out_dir: str) -> Dict[str, Any]:
    """
    Persist a manifest and its result files

    Returns:
        Dictionary with the manifest path and lists of run and series files
    """
    written = {
        'manifest': write_manifest(manifest, out_dir),
        'runs': write_run_files(manifest, out_dir),
        'series': write_series_files(manifest, out_dir),
    }
    logger.info(f"📊 {len(written['runs'])} run files and {len(written['series'])} series written to {out_dir}")
    return written


def load_manifest(path: str) -> RunManifest:
    """Load a manifest from its file or from the run directory containing it"""
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_FILE)
    try:
        with open(path, 'r') as file:
            data = yaml.safe_load(file)
    except FileNotFoundError:
        raise FileNotFoundError(f"Manifest not found: {path}")
    except yaml.YAMLError as e:
        raise ValueError(f"Error parsing manifest {path}: {e}")
    if not isinstance(data, dict):
        raise ValueError(f"Manifest {path} is empty or malformed")
    return RunManifest.from_dict(data)


def series_frame(manifest: RunManifest, name: str) -> pd.DataFrame:
    if name not in manifest.series:
        raise KeyError(f"manifest has no series {name!r}; available: {sorted(manifest.series)}")
    return frame_from_series(manifest.series[name])
