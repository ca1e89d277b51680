"""Test package for unitlab."""
