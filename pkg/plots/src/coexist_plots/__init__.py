"""Comparison charts derived from coexist-sim results.csv files."""

__version__ = "0.1.0"
