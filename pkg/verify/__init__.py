"""Theorem suites, refinement studies, the check engine and report emission."""

__version__ = "0.1.0"
