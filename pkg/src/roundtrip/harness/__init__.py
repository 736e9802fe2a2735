"""Configuration, run directories and the command-line interface."""
