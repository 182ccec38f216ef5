"""Casimir-force forward model and neural-network inversion of thin-film parameters."""

__version__ = "0.1.0"
