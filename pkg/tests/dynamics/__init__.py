# ABOUTME: Tests for ODE integration and sensitivities
