"""Configuration, constants, logging and the error hierarchy."""
