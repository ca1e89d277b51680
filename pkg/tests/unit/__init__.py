"""Unit tests for unitlab."""
