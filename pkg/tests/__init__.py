"""fglab test suite."""
