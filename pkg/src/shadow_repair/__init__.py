"""Shadow CI auto-repair: detect compilation failures, generate candidate
patches with pluggable model backends, and iterate a shadow CI loop beside
the main pipeline until the build passes or the retry budget runs out."""

__version__ = "0.1.0"
