"""Integration tests for unitlab."""
