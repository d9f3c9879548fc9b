"""Figure rendering for acoustomax CSV artifacts (heatmaps, cross-sections)."""

__version__ = "0.1.0"
