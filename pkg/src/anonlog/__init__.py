"""Multi-level anonymization of network logs, with the attacks used to
evaluate it."""

from .attacks import ClaimList, GroundTruth, MappingClaim, evaluate
from .parsers import parse_line, parse_lines, serialize
from .policy import Profile, apply_profile, load_profile
from .primitives import AnonKey, pp_anonymize
from .record import FieldClass, FieldValue, LogRecord, LogStream

__version__ = "0.1.0"

__all__ = [
    "AnonKey", "ClaimList", "FieldClass", "FieldValue", "GroundTruth", "LogRecord",
    "LogStream", "MappingClaim", "Profile", "apply_profile", "evaluate", "load_profile",
    "parse_line", "parse_lines", "pp_anonymize", "serialize",
]
