"""Schema library for the rdtrack workbench."""
