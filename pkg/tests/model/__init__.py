# ABOUTME: Tests for model parameters, posterior, fitting and prediction
