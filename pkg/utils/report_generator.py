"""
Report Generator Utility
Key-value reports for recovery results and demos, run manifests, and sweep tables (CSV)
"""

import io
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from core.cartan import assemble, gauge_distance
from core.qcore import TwoQubitUnitary, rotation_from_unitary
from estimators.recovery import RecoveryResult

from . import __version__

SWEEP_COLUMNS = ['instance', 'seed', 'n_steps', 'branch', 'gauge_distance', 'alpha_error', 'score']


def format_value(value: Any) -> str:
    """Deterministic text rendering: shortest round-trip floats, comma-joined sequences"""
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (complex, np.complexfloating)):
        return f'{float(value.real)!r}{float(value.imag):+}j'
    if isinstance(value, np.ndarray):
        return format_value(value.ravel().tolist())
    if isinstance(value, (list, tuple)):
        return ','.join(format_value(v) for v in value)
    if value is None:
        return 'none'
    return str(value)


@dataclass
class RunManifest:
    """Provenance of one command: inputs, outputs, seed, tool version, timestamps"""
    command: str
    config_path: str = ''
    dataset_path: str = ''
    report_path: str = ''
    fingerprint: str = ''
    seed: Optional[int] = None
    started_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished_at: str = ''
    tool_version: str = __version__

    def finish(self) -> 'RunManifest':
        self.finished_at = datetime.now(timezone.utc).isoformat()
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            'command': self.command,
            'config_path': self.config_path,
            'dataset_path': self.dataset_path,
            'report_path': self.report_path,
            'fingerprint': self.fingerprint,
            'seed': self.seed,
            'started_at': self.started_at,
            'finished_at': self.finished_at,
            'tool_version': self.tool_version,
        }


class ReportGenerator:
    def __init__(self):
        self.report_version = '1'

    def key_value_text(self, data: Dict[str, Any], title: str = 'memchan-report') -> str:
        lines = [f'# {title} v{self.report_version}']
        for key, value in data.items():
            lines.append(f'{key} = {format_value(value)}')
        return '\n'.join(lines) + '\n'

    def parse_key_value_text(self, content: str) -> Dict[str, str]:
        out: Dict[str, str] = {}
        for line in content.splitlines():
            if not line.strip() or line.startswith('#'):
                continue
            key, _, value = line.partition('=')
            out[key.strip()] = value.strip()
        return out

    def recovery_report(self, result: RecoveryResult, fingerprint: str,
                        ground_truth: Optional[TwoQubitUnitary] = None) -> Dict[str, Any]:
        """Flat report of branch, parameters, diagnostics and issues"""
        report: Dict[str, Any] = {
            'dataset.fingerprint': fingerprint,
            'success': result.success,
            'branch': result.branch,
        }
        if result.single_map is not None:
            report['single.T'] = result.single_map.T
            report['single.t'] = result.single_map.t
        if result.params is not None:
            report['params.alpha'] = result.params.alpha
            report['params.w2.rotation'] = rotation_from_unitary(result.params.w2)
            report['params.v2.rotation'] = rotation_from_unitary(result.params.v2)
            report['params.v1.rotation'] = rotation_from_unitary(result.params.v1)
            if ground_truth is not None:
                report['gauge_distance'] = gauge_distance(assemble(result.params), ground_truth)
        if result.controlled is not None:
            report['controlled.v_hat.rotation'] = result.controlled.rotation
            report['controlled.score'] = result.controlled.score
            report['controlled.half_scores'] = result.controlled.half_scores
            report['controlled.label'] = result.controlled.label
        for key, value in result.diagnostics.items():
            report[f'diagnostics.{key}'] = value
        for kind, issues in (('errors', result.errors), ('warnings', result.warnings)):
            report[f'{kind}.count'] = len(issues)
            for i, issue in enumerate(issues):
                for field_name in ('stage', 'message', 'details', 'suggestion'):
                    report[f'{kind}.{i}.{field_name}'] = issue.get(field_name, '')
        return report

    def manifest_text(self, manifest: RunManifest) -> str:
        return self.key_value_text(manifest.to_dict(), title='memchan-manifest')

    def sweep_csv(self, rows: List[Dict[str, Any]]) -> str:
        frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
        buffer = io.StringIO()
        frame.to_csv(buffer, index=False, float_format='%.10g', lineterminator='\n')
        return buffer.getvalue()

    def sweep_summary(self, rows: List[Dict[str, Any]]) -> pd.DataFrame:
        """Median gauge distance per n and the ratio between consecutive n"""
        frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
        summary = frame.groupby('n_steps')['gauge_distance'].median().sort_index().to_frame('median_gauge_distance')
        summary['ratio_to_previous'] = summary['median_gauge_distance'] / summary['median_gauge_distance'].shift(1)
        return summary
