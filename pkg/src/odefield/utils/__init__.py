# ABOUTME: Cross-cutting utilities shared by every layer
# ABOUTME: Logging configuration, restart progress and rich table builders
