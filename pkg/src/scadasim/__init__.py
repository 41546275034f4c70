"""Deterministic SCADA testbed simulator with watermark-based attack detection."""

__version__ = "0.1.0"
