# ABOUTME: Benchmark systems, PCA, error metrics and forecasting/imputation experiment protocols
# ABOUTME: Used by the CLI and by the acceptance tests
