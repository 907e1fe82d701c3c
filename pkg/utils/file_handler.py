"""
File Handler Utility
Reads and writes run configurations, v1 datasets and memory trajectories
"""

import io
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from core.errors import ConfigError, DataFormatError
from simulation.simulator import Dataset

logger = logging.getLogger(__name__)

DATASET_MAGIC = '#memchan-dataset v1'
PathLike = Union[str, Path]


class FileHandler:
    def parse_config_text(self, content: str) -> Dict[str, Any]:
        """`dotted.key = value` lines into a nested dict; `#` starts a comment"""
        parsed: Dict[str, Any] = {}
        seen = set()
        for line_num, raw in enumerate(content.splitlines(), 1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ConfigError(f'line {line_num}: expected `key = value`, got {raw.strip()!r}')
            key, value = (part.strip() for part in line.split('=', 1))
            if not key:
                raise ConfigError(f'line {line_num}: empty key')
            if key in seen:
                raise ConfigError(f'line {line_num}: duplicate key {key!r}', field_path=key)
            seen.add(key)
            node = parsed
            parts = key.split('.')
            for part in parts[:-1]:
                child = node.setdefault(part, {})
                if not isinstance(child, dict):
                    raise ConfigError(f'line {line_num}: {key!r} conflicts with a scalar key', field_path=key)
                node = child
            if isinstance(node.get(parts[-1]), dict):
                raise ConfigError(f'line {line_num}: {key!r} conflicts with a section', field_path=key)
            node[parts[-1]] = value
        return parsed

    def read_config(self, path: PathLike) -> Dict[str, Any]:
        try:
            content = Path(path).read_text(encoding='utf-8')
        except OSError as exc:
            raise ConfigError(f'cannot read config file {path}: {exc.strerror}', field_path='') from exc
        except UnicodeDecodeError as exc:
            raise ConfigError(f'config file {path} is not UTF-8 text (byte {exc.start})', field_path='') from exc
        return self.parse_config_text(content)

    def dataset_to_text(self, dataset: Dataset) -> str:
        lines = [f'{DATASET_MAGIC} {dataset.config_fingerprint}']
        lines.extend(f'{step},{setting},{outcome}'
                     for step, setting, outcome in zip(range(len(dataset)), dataset.settings.tolist(),
                                                       dataset.outcomes.tolist()))
        return '\n'.join(lines) + '\n'

    def write_dataset(self, dataset: Dataset, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='ascii', newline='\n') as handle:
            handle.write(self.dataset_to_text(dataset))
        logger.info('wrote %d records to %s', len(dataset), path)
        return path

    def parse_dataset_text(self, content: str) -> Dataset:
        header, _, body = content.partition('\n')
        if not header.startswith(DATASET_MAGIC + ' '):
            raise DataFormatError(f'missing `{DATASET_MAGIC} <fingerprint>` header')
        fingerprint = header[len(DATASET_MAGIC) + 1:].strip()
        if not fingerprint:
            raise DataFormatError('dataset header carries no config fingerprint')
        if not body.strip():
            return Dataset(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), fingerprint)
        try:
            frame = pd.read_csv(io.StringIO(body), header=None, names=['step', 'setting_id', 'outcome_id'],
                                dtype=np.int64, skip_blank_lines=True)
        except (ValueError, pd.errors.ParserError) as exc:
            raise DataFormatError(f'malformed dataset record: {exc}') from exc
        if frame.isna().any().any():
            raise DataFormatError('dataset record with missing fields')
        if not np.array_equal(frame['step'].to_numpy(), np.arange(len(frame))):
            bad = int(np.flatnonzero(frame['step'].to_numpy() != np.arange(len(frame)))[0])
            raise DataFormatError(f'record {bad}: steps must run 0, 1, 2, ... without gaps')
        return Dataset(frame['setting_id'].to_numpy(), frame['outcome_id'].to_numpy(), fingerprint)

    def read_dataset(self, path: PathLike) -> Dataset:
        try:
            content = Path(path).read_text(encoding='ascii')
        except UnicodeDecodeError as exc:
            raise DataFormatError(f'dataset {path} is not ASCII text (byte {exc.start})') from exc
        return self.parse_dataset_text(content)

    def write_trajectory(self, dataset: Dataset, path: PathLike) -> Optional[Path]:
        if dataset.memory_trajectory is None:
            return None
        frame = pd.DataFrame(dataset.memory_trajectory, columns=['x', 'y', 'z'])
        frame.insert(0, 'step', np.arange(len(frame)))
        frame.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')
        return Path(path)

    def write_text(self, text: str, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as handle:
            handle.write(text)
        return path

    def output_paths(self, out_dir: PathLike) -> Tuple[Path, Path, Path, Path]:
        """dataset.txt, report.txt, manifest.txt, memory_trajectory.csv under out_dir"""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return out / 'dataset.txt', out / 'report.txt', out / 'manifest.txt', out / 'memory_trajectory.csv'
