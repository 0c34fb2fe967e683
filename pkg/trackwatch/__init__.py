"""Vessel track anomaly detection over AIS position reports."""

from .version import __version__
