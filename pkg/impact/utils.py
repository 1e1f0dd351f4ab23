"""
Utility functions for writing experiment outputs.
"""
import json
from pathlib import Path
from typing import Iterable, Sequence

import pandas as pd
from django.conf import settings

import impactlab

RESOLVED_CONFIG_NAME = 'resolved_config.json'


def write_csv(rows: Iterable[dict], path: Path, columns: Sequence[str] = None) -> Path:
    """Write rows as UTF-8 CSV with LF line endings and a header row."""
    frame = pd.DataFrame(list(rows), columns=columns)
    frame.to_csv(path, index=False, lineterminator='\n', encoding='utf-8')
    return path


def write_path_csv(sim_path, path: Path) -> Path:
    """Dump one simulated path as columns t,q,S,X."""
    frame = pd.DataFrame({'t': sim_path.times, 'q': sim_path.q, 'S': sim_path.S, 'X': sim_path.X})
    frame.to_csv(path, index=False, lineterminator='\n', encoding='utf-8')
    return path


def write_ensemble_csv(stats, path: Path) -> Path:
    """Ensemble report as columns observable,mean,stderr,n."""
    return write_csv(stats.rows(), path, columns=['observable', 'mean', 'stderr', 'n'])


def write_resolved_config(out_dir: Path, command: str, config: dict, threads: int) -> Path:
    """Store the validated config with the schema and toolkit versions next to the outputs."""
    document = {
        'schema_version': settings.IMPACTLAB['SCHEMA_VERSION'],
        'toolkit_version': impactlab.__version__,
        'command': command,
        'threads': threads,
        'config': config,
    }
    path = out_dir / RESOLVED_CONFIG_NAME
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    return path
