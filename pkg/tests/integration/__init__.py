"""Integration tests for training runs and resumption."""
