# ABOUTME: Tests for benchmark systems, PCA, metrics and experiments
