"""Scenario configuration, initial data, experiment drivers and the command-line entry point."""
