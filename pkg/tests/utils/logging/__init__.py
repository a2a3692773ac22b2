# ABOUTME: Tests for the odefield logging setup
# ABOUTME: Interactive and production modes, operation context and run progress
