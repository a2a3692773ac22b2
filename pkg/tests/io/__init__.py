# ABOUTME: Tests for series, model and report files
