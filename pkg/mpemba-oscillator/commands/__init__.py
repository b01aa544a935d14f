"""Subcommand implementations for the relaxation toolkit CLI."""

__all__ = ["simulate", "spectrum", "moments_report"]
