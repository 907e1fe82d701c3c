"""
Error types
Exception hierarchy shared by the simulator, estimators and command-line front end
"""

from typing import Optional


class MemchanError(Exception):
    """Base class for every error raised by this package"""


class ConfigError(MemchanError):
    """Configuration file is unreadable or violates the schema"""

    def __init__(self, message: str, field_path: str = ''):
        super().__init__(message)
        self.field_path = field_path


class DataFormatError(MemchanError):
    """Dataset or report file does not follow the expected line format"""


class DataRangeError(MemchanError):
    """Setting or outcome ids outside the ensemble / POVM range"""


class NotUnitaryError(MemchanError):
    """Matrix is not unitary within tolerance"""


class ZeroProbabilityBranch(MemchanError):
    """An outcome with (numerically) zero probability was requested or drawn"""

    def __init__(self, message: str, step: Optional[int] = None, probability: float = 0.0):
        super().__init__(message)
        self.step = step
        self.probability = probability


class PipelineError(MemchanError):
    """Failure inside one stage of the estimation pipeline"""

    def __init__(self, message: str, stage: str = 'pipeline', residual: float = float('nan')):
        super().__init__(message)
        self.stage = stage
        self.residual = residual


class IllPosedReconstruction(PipelineError):
    """Design matrix of the linear inversion is rank deficient"""


class InsufficientData(PipelineError):
    """Not enough records (or consecutive pairs) for the requested estimate"""


class ModelViolation(PipelineError):
    """Estimate is inconsistent with the unitary collision model"""


class NotUnital(PipelineError):
    """Single-use channel has a translation above the unitality tolerance"""


class NotControlled(PipelineError):
    """Interaction (or estimated channel) is not of controlled-unitary form"""


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_PIPELINE = 4


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the command-line exit status"""
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, (DataFormatError, DataRangeError, FileNotFoundError)):
        return EXIT_DATA
    return EXIT_PIPELINE


def error_kind(error: BaseException) -> str:
    """snake_case name used in the machine-parsable error line"""
    name = type(error).__name__
    out = []
    for i, ch in enumerate(name):
        if ch.isupper() and i > 0 and not name[i - 1].isupper():
            out.append('_')
        out.append(ch.lower())
    return ''.join(out)
