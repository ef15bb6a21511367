"""plotviz: heatmap rendering for FieldGrid v1 scalar-field files."""

from .reader import Field, FieldGridError, read_field
from .render import batch, render

__version__ = "0.1.0"
__all__ = ["Field", "FieldGridError", "read_field", "render", "batch"]
