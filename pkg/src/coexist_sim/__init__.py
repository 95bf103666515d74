"""Discrete-event simulator of LAA and Wi-Fi nodes sharing an unlicensed channel."""

__version__ = "0.1.0"
