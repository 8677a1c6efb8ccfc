"""Simulator of CCN routers whose cache policies are chosen by stream reasoning."""

__version__ = "0.1.0"
