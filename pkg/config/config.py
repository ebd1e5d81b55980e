#!/usr/bin/env python3
"""
Configuration module for the sparse GP toolkit
Provides functions to read YAML configuration files and resolve data locations
"""

import os
import yaml
from typing import Any, Dict, Optional

from dotenv import load_dotenv

load_dotenv()

OUTPUT_DIR_ENV = 'SPARSEGP_OUTPUT_DIR'


def get_config(config_name: str) -> Dict[str, Any]:
    """Generic function to load any YAML config file"""
    config_path = os.path.join(os.path.dirname(__file__), f'{config_name}.yaml')
    return load_yaml_file(config_path)


def load_yaml_file(path: str) -> Dict[str, Any]:
    """Load a YAML mapping from an arbitrary path"""
    try:
        with open(path, 'r') as file:
            content = yaml.safe_load(file)
    except FileNotFoundError:
        raise FileNotFoundError(f"Config file not found: {path}")
    except yaml.YAMLError as e:
        raise ValueError(f"Error parsing config {path}: {e}")
    if content is None:
        return {}
    if not isinstance(content, dict):
        raise ValueError(f"Config {path} must contain a mapping at the top level")
    return content


def get_experiment_defaults(experiment: str) -> Dict[str, Any]:
    """Shared defaults plus the named experiment's block, unmerged"""
    config = get_config('experiments')
    experiments = config.get('experiments', {})
    if experiment not in experiments:
        raise ValueError(f"Unknown experiment '{experiment}'. Known: {sorted(experiments)}")
    return {
        'defaults': config.get('defaults', {}),
        'experiment': experiments[experiment] or {},
    }


def get_dataset_config(name: str) -> Dict[str, Any]:
    """Registry entry for a named dataset with environment-resolved paths"""
    datasets = get_config('datasets').get('datasets', {})
    if name not in datasets:
        raise ValueError(f"Unknown dataset '{name}'. Known: {sorted(datasets)}")
    entry = dict(datasets[name])

    data_dir_env = entry.pop('data_dir_env', None)
    if data_dir_env:
        data_dir = os.getenv(data_dir_env)
        if not data_dir:
            raise FileNotFoundError(f"Dataset '{name}' needs {data_dir_env} to point at its directory")
        entry['inputs_path'] = os.path.join(data_dir, entry.pop('inputs_file'))
        entry['outputs_path'] = os.path.join(data_dir, entry.pop('outputs_file'))

    path_env = entry.pop('path_env', None)
    if path_env:
        path = os.getenv(path_env)
        if not path:
            raise FileNotFoundError(f"Dataset '{name}' needs {path_env} to point at its data file")
        entry['path'] = path

    return entry


def get_output_dir(default: Optional[str] = None) -> str:
    """Output root: SPARSEGP_OUTPUT_DIR if set, else the given default"""
    return os.getenv(OUTPUT_DIR_ENV) or default or 'results'
