"""Bundled fixture files."""
