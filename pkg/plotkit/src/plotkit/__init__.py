"""plotkit: render gpbnn experiment CSVs into publication-style figures.

Strictly file-driven: reads the CSV formats the gpbnn CLI emits
(prior draws, predictive bands, learning curves, Q slices) and writes
images.  No numerical work happens here beyond the plotted statistics.
"""

from .render import (
    PlotDataError,
    plot_learning_curves,
    plot_predictive_bands,
    plot_prior_gallery,
    plot_q_slice,
)

__all__ = [
    "PlotDataError",
    "plot_prior_gallery",
    "plot_predictive_bands",
    "plot_learning_curves",
    "plot_q_slice",
]
