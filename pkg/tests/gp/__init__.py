# ABOUTME: Tests for Gaussian-process kernel and field
