"""Distributed Orc: language, timed semantics, runtime, and analysis."""

__version__ = "0.1.0"
