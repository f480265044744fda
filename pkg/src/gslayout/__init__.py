"""Scene-graph driven layout of per-object Gaussian clouds."""
__version__ = "0.1.0"
