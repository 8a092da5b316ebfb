"""Geospatial tracking of a single target from the sizes and timing of encrypted video traffic."""

__version__ = "0.1.0"
