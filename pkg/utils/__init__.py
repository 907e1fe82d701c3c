"""
Memchan Utils Package
Configuration schema, file handling and report generation
"""

__version__ = '1.0.0'

from .file_handler import FileHandler
from .report_generator import ReportGenerator, RunManifest
from .config import MemchanConfig, PRESETS

__all__ = [
    '__version__',
    'FileHandler',
    'ReportGenerator',
    'RunManifest',
    'MemchanConfig',
    'PRESETS',
]
