"""Logging helpers for the rdtrack workbench."""
