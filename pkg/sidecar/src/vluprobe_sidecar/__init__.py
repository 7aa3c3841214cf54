"""Serve transformer checkpoints over the NDJSON model-provider protocol."""

__version__ = "0.1.0"
