"""Convert binary profiler report files into canonical profile-bundle JSON."""

from .extract import bundle_schema, extract_bundle, load_manifest, normalize_line_csv, select_instance
from .errors import ExtractError, ImportFailure, NoMatchingKernel, ReportUnreadable

__version__ = "0.1.0"
