"""Backbone-to-ONNX export tool with dual-runtime certification."""

from .export import (
    DEFAULT_VARIANTS,
    REQUIRED_DIMS,
    ExportRecord,
    WidthMismatchError,
    export,
    export_all,
    read_manifest,
    validate,
    write_manifest,
)

__version__ = "0.1.0"
