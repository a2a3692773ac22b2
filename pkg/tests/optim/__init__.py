# ABOUTME: Tests for the L-BFGS optimiser
