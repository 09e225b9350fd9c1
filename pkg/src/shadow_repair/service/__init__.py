"""HTTP service wrapping the repair pipeline for CLI and sidecar use."""

from .app import create_app

__all__ = ["create_app"]
