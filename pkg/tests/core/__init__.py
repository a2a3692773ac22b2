# ABOUTME: Tests for the async fit service
