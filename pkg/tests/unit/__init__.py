"""Unit tests for fglab models and components."""
