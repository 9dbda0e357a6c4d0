"""Static figures from confsim CSV artifacts.

This package only reads the documented CSV schemas; it has no in-process
coupling to the inference code, so the analysis pipeline runs with or
without it.
"""

from confsim_plots.render import PlotJob, RenderResult, SchemaError, render

__all__ = ["PlotJob", "RenderResult", "SchemaError", "render"]

__version__ = "0.1.0"
