"""Regenerates field-overlay, transition and particle-count figures from
hybridgas run directories (CSV snapshots plus a JSON manifest)."""

__version__ = "0.1.0"
