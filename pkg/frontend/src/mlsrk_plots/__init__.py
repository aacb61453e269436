"""Figure rendering for the mlsrk benchmark CSV outputs."""

from .figures import (
    COST_COLUMNS,
    KINDS,
    RATE_COLUMNS,
    FigureSpec,
    RenderSummary,
    SchemaError,
    read_table,
    render,
)

__version__ = "0.1.0"

__all__ = [
    "COST_COLUMNS",
    "FigureSpec",
    "KINDS",
    "RATE_COLUMNS",
    "RenderSummary",
    "SchemaError",
    "read_table",
    "render",
]
