"""Static figure generation from bound-surface CSV files."""

from .render import RenderSummary, SchemaError, load_oracle, load_surface, render_heatmap

__all__ = ["RenderSummary", "SchemaError", "load_oracle", "load_surface", "render_heatmap"]

__version__ = "0.1.0"
